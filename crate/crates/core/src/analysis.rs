// SPDX-License-Identifier: Apache-2.0

//! Non-ideal measurement conditions.
//!
//! A [`TesterModel`] quantizes both the stimulus and the response
//! timestamps. Quantization error on a raw timestamp is bounded by
//! [`raw_error`], and [`error_bounds`] pushes those intervals through the
//! extraction equations exactly as the orchestrator applies them (measured
//! values feeding later equations). [`monte_carlo_sweep`] checks the bounds
//! empirically over random stimulus phases.

use std::fmt;
use std::io;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::interval::Interval;
use crate::model::{LineKind, PipelineSpec, Time};
use crate::orchestrator::{Device, ExtractionReport, Orchestrator, Quantity, SimulatedDevice};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Round half up to a multiple of the resolution.
    #[default]
    Nearest,
    /// Largest multiple of the resolution not above the value.
    Floor,
}

/// Timing accuracy of the external tester.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TesterModel {
    #[serde(rename = "resolution_ps")]
    pub resolution: Time,
    #[serde(default)]
    pub rounding: Rounding,
    /// When set, timestamps are taken exactly and `resolution` is ignored.
    #[serde(default)]
    pub ideal: bool,
}

impl Default for TesterModel {
    fn default() -> Self {
        TesterModel::ideal()
    }
}

impl TesterModel {
    pub fn ideal() -> Self {
        TesterModel {
            resolution: Time::from_ps(1),
            rounding: Rounding::Nearest,
            ideal: true,
        }
    }

    pub fn new(resolution_ps: u64, rounding: Rounding) -> Result<Self, ModelError> {
        let t = TesterModel {
            resolution: Time::from_ps(resolution_ps),
            rounding,
            ideal: false,
        };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !self.ideal && self.resolution == Time::ZERO {
            return Err(ModelError::ZeroResolution);
        }
        Ok(())
    }
}

pub fn quantize(t: Time, tester: &TesterModel) -> Time {
    if tester.ideal {
        return t;
    }
    let r = tester.resolution.as_ps();
    let ps = t.as_ps();
    let q = match tester.rounding {
        Rounding::Nearest => (ps + r / 2) / r * r,
        Rounding::Floor => ps / r * r,
    };
    Time::from_ps(q)
}

/// Range of `quantize(t) - t` over integer `t`.
pub fn raw_error(tester: &TesterModel) -> Interval {
    if tester.ideal {
        return Interval::ZERO;
    }
    let r = tester.resolution.as_ps() as i64;
    match tester.rounding {
        Rounding::Nearest => Interval::new(-((r + 1) / 2 - 1), r / 2),
        Rounding::Floor => Interval::new(-(r - 1), 0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Multiply the delay, rounding to the nearest picosecond.
    Scale(f64),
    Offset(i64),
}

/// A single delay-line fault.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub line: LineKind,
    pub stage: usize,
    pub kind: FaultKind,
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FaultKind::Scale(k) => write!(f, "{}:{}:scale:{k}", self.line.name(), self.stage),
            FaultKind::Offset(d) => write!(f, "{}:{}:offset:{d}", self.line.name(), self.stage),
        }
    }
}

/// Parses `KIND:IDX:OP:VAL`, e.g. `delta_small:1:scale:1.2` or `delta_big:2:offset:-10`.
impl FromStr for FaultSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [line, stage, op, value] = parts[..] else {
            return Err(format!("fault {s:?}: expected KIND:IDX:OP:VAL"));
        };
        let line = match line {
            "delta_big" => LineKind::DeltaBig,
            "delta_small" => LineKind::DeltaSmall,
            other => return Err(format!("fault {s:?}: unknown line kind {other:?}")),
        };
        let stage = stage
            .parse()
            .map_err(|_| format!("fault {s:?}: bad stage index {stage:?}"))?;
        let kind = match op {
            "scale" => FaultKind::Scale(
                value
                    .parse()
                    .map_err(|_| format!("fault {s:?}: bad scale factor {value:?}"))?,
            ),
            "offset" => FaultKind::Offset(
                value
                    .parse()
                    .map_err(|_| format!("fault {s:?}: bad offset {value:?}"))?,
            ),
            other => return Err(format!("fault {s:?}: unknown operation {other:?}")),
        };
        Ok(FaultSpec { line, stage, kind })
    }
}

/// Returns a copy of `pipeline` with `fault` applied.
pub fn inject_fault(
    pipeline: &PipelineSpec,
    fault: &FaultSpec,
) -> Result<PipelineSpec, ModelError> {
    if fault.stage >= pipeline.len() {
        return Err(ModelError::StageIndex {
            index: fault.stage,
            stages: pipeline.len(),
        });
    }
    let old = pipeline.line(fault.line, fault.stage).as_ps() as f64;
    let new = match fault.kind {
        FaultKind::Scale(k) => (old * k).round(),
        FaultKind::Offset(d) => old + d as f64,
    };
    if !new.is_finite() || new < 1.0 {
        return Err(ModelError::FaultOutOfRange {
            line: fault.line.name(),
            stage: fault.stage,
            value: new,
        });
    }
    let mut out = pipeline.clone();
    let stage = out.stage_mut(fault.stage);
    let slot = match fault.line {
        LineKind::DeltaBig => &mut stage.delta_big,
        LineKind::DeltaSmall => &mut stage.delta_small,
    };
    *slot = Time::from_ps(new as u64);
    Ok(out)
}

/// Propagation delays outside the delay lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParasiticModel {
    /// Per stage, added to the forwarded request after δ.
    #[serde(rename = "w")]
    pub forwarding: Vec<Time>,
    /// Per stage, added between the end of Δ and `Sample`.
    #[serde(rename = "u")]
    pub sampling: Vec<Time>,
    /// OR tree and `Error1` pad.
    #[serde(rename = "v")]
    pub observation: Time,
    /// `REack` pad path.
    #[serde(rename = "rho")]
    pub reack: Time,
}

impl ParasiticModel {
    pub fn zero(stages: usize) -> Self {
        ParasiticModel {
            forwarding: vec![Time::ZERO; stages],
            sampling: vec![Time::ZERO; stages],
            observation: Time::ZERO,
            reack: Time::ZERO,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.forwarding
            .iter()
            .chain(&self.sampling)
            .all(|&t| t == Time::ZERO)
            && self.observation == Time::ZERO
            && self.reack == Time::ZERO
    }

    pub fn check(&self, stages: usize) -> Result<(), ModelError> {
        for got in [self.forwarding.len(), self.sampling.len()] {
            if got != stages {
                return Err(ModelError::ParasiticLength {
                    expected: stages,
                    got,
                });
            }
        }
        Ok(())
    }
}

/// The simulated device with `parasitics` on its non-delay-line paths.
pub fn apply_parasitics(
    pipeline: &PipelineSpec,
    parasitics: &ParasiticModel,
) -> Result<SimulatedDevice, ModelError> {
    SimulatedDevice::with_parasitics(pipeline.clone(), parasitics.clone())
}

/// Worst-case error interval of one reported quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityBound {
    pub quantity: Quantity,
    /// Value an ideal tester would report.
    pub ideal_ps: i64,
    /// `measured - ideal` lies in this interval.
    pub error: Interval,
}

impl QuantityBound {
    /// Interval containing the measured value.
    pub fn absolute(&self) -> Interval {
        self.error.shift(self.ideal_ps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub tester: TesterModel,
    pub quantities: Vec<QuantityBound>,
}

impl ErrorBounds {
    pub fn get(&self, q: Quantity) -> Option<&QuantityBound> {
        self.quantities.iter().find(|b| b.quantity == q)
    }
}

/// Error intervals for the ideal extraction of `pipeline` under `tester`.
///
/// Each measurement subtracts two quantized timestamps, so its raw error is
/// `raw_error - raw_error`; later equations add the intervals of every
/// measured value they reuse.
pub fn error_bounds(pipeline: &PipelineSpec, tester: &TesterModel) -> ErrorBounds {
    let ideal = crate::orchestrator::extract_all(&SimulatedDevice::new(pipeline.clone()));
    error_bounds_for(&ideal, tester)
}

/// As [`error_bounds`], around an already extracted ideal report.
pub fn error_bounds_for(ideal: &ExtractionReport, tester: &TesterModel) -> ErrorBounds {
    let n = ideal.stages;
    let raw = raw_error(tester);
    // the two timestamps of a measurement are rounded independently
    let elapsed = raw + -raw;

    let t_sum = elapsed;
    let big: Vec<Interval> = (0..n).map(|_| elapsed - t_sum).collect();
    let mut small: Vec<Interval> = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let upstream: Interval = small[..i].iter().copied().sum();
        small.push(elapsed - upstream - big[i + 1]);
    }
    let upstream: Interval = small.iter().copied().sum();
    small.push(t_sum - upstream);

    let mut quantities = Vec::with_capacity(2 * n + 1);
    for q in Quantity::all(n) {
        let error = match q {
            Quantity::TSum => t_sum,
            Quantity::Line(LineKind::DeltaBig, i) => big[i],
            Quantity::Line(LineKind::DeltaSmall, i) => small[i],
        };
        quantities.push(QuantityBound {
            quantity: q,
            ideal_ps: ideal.value(q).unwrap_or_default(),
            error,
        });
    }
    ErrorBounds {
        tester: *tester,
        quantities,
    }
}

/// Empirical error statistics of one quantity over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub quantity: Quantity,
    pub trials: usize,
    pub max_err_ps: i64,
    pub mean_err_ps: f64,
    pub observed_lo_ps: i64,
    pub observed_hi_ps: i64,
    pub bound: Interval,
}

impl SweepRow {
    pub fn within_bound(&self) -> bool {
        self.trials == 0
            || (self.bound.contains(self.observed_lo_ps)
                && self.bound.contains(self.observed_hi_ps))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub tester: TesterModel,
    pub trials: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, q: Quantity) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.quantity == q)
    }

    pub fn all_within_bounds(&self) -> bool {
        self.rows.iter().all(SweepRow::within_bound)
    }
}

/// Repeats the full extraction `trials` times with every run's stimulus at
/// a random phase in `[0, r)`. Trial `k` draws from stream `k` of a ChaCha
/// generator seeded with `seed`, so results do not depend on scheduling.
pub fn monte_carlo_sweep<D: Device + Sync>(
    device: &D,
    tester: &TesterModel,
    trials: usize,
    seed: u64,
) -> Result<SweepResult, ModelError> {
    if trials == 0 {
        return Err(ModelError::ZeroTrials);
    }
    tester.check()?;
    let ideal = Orchestrator::new(device).extract_all();
    let bounds = error_bounds_for(&ideal, tester);
    let quantities = Quantity::all(device.stage_count());

    let per_trial: Vec<Vec<Option<i64>>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let report = Orchestrator::new(device)
                .with_tester(*tester)
                .with_random_phase(rng)
                .extract_all();
            quantities
                .iter()
                .map(|&q| Some(report.value(q)? - ideal.value(q)?))
                .collect()
        })
        .collect();

    let rows = quantities
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let errs: Vec<i64> = per_trial.iter().filter_map(|t| t[j]).collect();
            let count = errs.len();
            let max_err_ps = errs.iter().map(|e| e.abs()).max().unwrap_or(0);
            let mean_err_ps = if count == 0 {
                0.0
            } else {
                errs.iter().map(|e| e.abs() as f64).sum::<f64>() / count as f64
            };
            SweepRow {
                quantity: q,
                trials: count,
                max_err_ps,
                mean_err_ps,
                observed_lo_ps: errs.iter().copied().min().unwrap_or(0),
                observed_hi_ps: errs.iter().copied().max().unwrap_or(0),
                bound: bounds.get(q).map(|b| b.error).unwrap_or(Interval::ZERO),
            }
        })
        .collect();

    Ok(SweepResult {
        tester: *tester,
        trials,
        rows,
    })
}

/// Writes sweep rows as CSV: `resolution_ps, quantity, trials, max_err_ps,
/// mean_err_ps, bound_lo_ps, bound_hi_ps`.
pub fn write_sweep_csv<W: io::Write>(w: W, results: &[SweepResult]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "resolution_ps",
        "quantity",
        "trials",
        "max_err_ps",
        "mean_err_ps",
        "bound_lo_ps",
        "bound_hi_ps",
    ])?;
    for result in results {
        let r = if result.tester.ideal {
            0
        } else {
            result.tester.resolution.as_ps()
        };
        for row in &result.rows {
            out.write_record([
                r.to_string(),
                row.quantity.to_string(),
                row.trials.to_string(),
                row.max_err_ps.to_string(),
                format!("{:.3}", row.mean_err_ps),
                row.bound.lo.to_string(),
                row.bound.hi.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
