// SPDX-License-Identifier: Apache-2.0

//! Area cost of the DfT insertion.
//!
//! With test support every stage carries a controller and an SQF, plus one
//! OR gate collecting the `err1` nets; without it each stage has a plain
//! Q-Flop and there is no OR gate. Delay-line area is design dependent and
//! excluded.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Cell areas (µm²) and transistor counts. Defaults are 28 nm figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellLibrary {
    pub a_control: f64,
    pub a_qflop: f64,
    pub a_sqf: f64,
    pub a_nin_or: f64,
    /// When set, the OR gate costs this much per input instead of `a_nin_or`.
    pub or_area_per_input: Option<f64>,
    pub t_qflop: u32,
    pub t_sqf: u32,
    pub sqf_per_32bit_stage: u32,
}

impl Default for CellLibrary {
    fn default() -> Self {
        CellLibrary {
            a_control: 27.0,
            a_qflop: 7.0,
            a_sqf: 10.0,
            a_nin_or: 2.6,
            or_area_per_input: None,
            t_qflop: 28,
            t_sqf: 40,
            sqf_per_32bit_stage: 4,
        }
    }
}

impl CellLibrary {
    pub fn check(&self) -> Result<(), ModelError> {
        let areas = [
            ("a_control", self.a_control),
            ("a_qflop", self.a_qflop),
            ("a_sqf", self.a_sqf),
        ];
        for (name, v) in areas {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::CellValue(name));
            }
        }
        // a zero-area OR is allowed: it isolates the per-stage terms
        if !(self.a_nin_or >= 0.0 && self.a_nin_or.is_finite()) {
            return Err(ModelError::CellValue("a_nin_or"));
        }
        if let Some(per) = self.or_area_per_input {
            if !(per >= 0.0 && per.is_finite()) {
                return Err(ModelError::CellValue("or_area_per_input"));
            }
        }
        if self.t_qflop == 0 {
            return Err(ModelError::CellValue("t_qflop"));
        }
        if self.t_sqf == 0 {
            return Err(ModelError::CellValue("t_sqf"));
        }
        if self.sqf_per_32bit_stage == 0 {
            return Err(ModelError::CellValue("sqf_per_32bit_stage"));
        }
        Ok(())
    }

    /// Sets one field by name; used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let float = || {
            value
                .parse::<f64>()
                .map_err(|e| format!("{key}={value}: {e}"))
        };
        let int = || {
            value
                .parse::<u32>()
                .map_err(|e| format!("{key}={value}: {e}"))
        };
        match key {
            "a_control" => self.a_control = float()?,
            "a_qflop" => self.a_qflop = float()?,
            "a_sqf" => self.a_sqf = float()?,
            "a_nin_or" => self.a_nin_or = float()?,
            "or_area_per_input" => self.or_area_per_input = Some(float()?),
            "t_qflop" => self.t_qflop = int()?,
            "t_sqf" => self.t_sqf = int()?,
            "sqf_per_32bit_stage" => self.sqf_per_32bit_stage = int()?,
            _ => return Err(format!("unknown cell library key {key:?}")),
        }
        Ok(())
    }

    fn or_area(&self, n: u32) -> f64 {
        match self.or_area_per_input {
            Some(per) => per * f64::from(n),
            None => self.a_nin_or,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub n: u32,
    pub area_with_test: f64,
    pub area_without_test: f64,
    /// Percent.
    pub overhead: f64,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl AreaReport {
    /// All figures rounded to two decimals.
    pub fn rounded(&self) -> AreaReport {
        AreaReport {
            n: self.n,
            area_with_test: round2(self.area_with_test),
            area_without_test: round2(self.area_without_test),
            overhead: round2(self.overhead),
        }
    }

    pub fn table(&self) -> String {
        let r = self.rounded();
        format!(
            "stages             {:>10}\n\
             area with test     {:>10.2} um^2\n\
             area without test  {:>10.2} um^2\n\
             overhead           {:>10.2} %\n",
            r.n, r.area_with_test, r.area_without_test, r.overhead
        )
    }
}

pub fn area_report(n: u32, lib: &CellLibrary) -> Result<AreaReport, ModelError> {
    if n < 1 {
        return Err(ModelError::ZeroStages);
    }
    lib.check()?;
    let stages = f64::from(n);
    let with = stages * (lib.a_control + lib.a_sqf) + lib.or_area(n);
    let without = stages * (lib.a_control + lib.a_qflop);
    Ok(AreaReport {
        n,
        area_with_test: with,
        area_without_test: without,
        overhead: (with - without) / without * 100.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DftCost {
    pub sqf_count: u64,
    pub transistor_delta: i64,
}

/// SQF count and added transistors; SQFs scale linearly with data width.
pub fn dft_cost(n: u32, bits_per_stage: u32, lib: &CellLibrary) -> Result<DftCost, ModelError> {
    if n < 1 {
        return Err(ModelError::ZeroStages);
    }
    if bits_per_stage == 0 || !bits_per_stage.is_multiple_of(8) {
        return Err(ModelError::InvalidWidth(bits_per_stage));
    }
    lib.check()?;
    let per_stage_x32 = u64::from(bits_per_stage) * u64::from(lib.sqf_per_32bit_stage);
    if per_stage_x32 % 32 != 0 {
        return Err(ModelError::InvalidWidth(bits_per_stage));
    }
    let sqf_count = u64::from(n) * per_stage_x32 / 32;
    let per_cell = i64::from(lib.t_sqf) - i64::from(lib.t_qflop);
    Ok(DftCost {
        sqf_count,
        transistor_delta: sqf_count as i64 * per_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_stage_defaults() {
        let r = area_report(3, &CellLibrary::default()).unwrap().rounded();
        assert_eq!(r.area_with_test, 113.6);
        assert_eq!(r.area_without_test, 102.0);
        assert_eq!(r.overhead, 11.37);
    }

    #[test]
    fn ten_stage_defaults() {
        let r = area_report(10, &CellLibrary::default()).unwrap().rounded();
        assert_eq!(r.area_with_test, 372.6);
        assert_eq!(r.area_without_test, 340.0);
        assert_eq!(r.overhead, 9.59);
    }

    #[test]
    fn single_stage_without_or() {
        let lib = CellLibrary {
            a_nin_or: 0.0,
            ..CellLibrary::default()
        };
        let r = area_report(1, &lib).unwrap();
        let expected = (lib.a_sqf - lib.a_qflop) / (lib.a_control + lib.a_qflop) * 100.0;
        assert!((r.overhead - expected).abs() < 1e-12);
        assert_eq!(area_report(0, &lib), Err(ModelError::ZeroStages));
    }

    #[test]
    fn overhead_positive_and_monotone() {
        let lib = CellLibrary::default();
        let o: Vec<f64> = (1..=64)
            .map(|n| area_report(n, &lib).unwrap().overhead)
            .collect();
        assert!(o.iter().all(|&x| x > 0.0));
        assert!(o.windows(2).all(|w| w[1] < w[0]));

        let amortized = CellLibrary {
            a_sqf: 7.0,
            ..CellLibrary::default()
        };
        let o: Vec<f64> = (1..=64)
            .map(|n| area_report(n, &amortized).unwrap().overhead)
            .collect();
        assert!(o.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn per_input_or_scaling() {
        let mut lib = CellLibrary::default();
        lib.set("or_area_per_input", "1").unwrap();
        let r = area_report(4, &lib).unwrap();
        assert_eq!(r.area_with_test, 4.0 * 37.0 + 4.0);
        assert!(lib.set("a_bogus", "1").is_err());
        assert!(lib.set("a_sqf", "x").is_err());
    }

    #[test]
    fn sqf_counts() {
        let lib = CellLibrary::default();
        assert_eq!(
            dft_cost(3, 32, &lib).unwrap(),
            DftCost {
                sqf_count: 12,
                transistor_delta: 144
            }
        );
        assert_eq!(dft_cost(1, 32, &lib).unwrap().sqf_count, 4);
        assert_eq!(dft_cost(1, 64, &lib).unwrap().sqf_count, 8);
        assert_eq!(dft_cost(1, 12, &lib), Err(ModelError::InvalidWidth(12)));
        assert_eq!(dft_cost(1, 0, &lib), Err(ModelError::InvalidWidth(0)));
    }
}
