// SPDX-License-Identifier: Apache-2.0

//! Offline delay-line extraction from primary pins.
//!
//! Each measurement fully resets the device, shifts a vector into the SQF
//! chain, raises `Lreq` and timestamps one response pin:
//!
//! 1. all stages forced to err0; `T_Sum = T_Rreq - T_Lreq`
//! 2. err1 on stage `i` only; `Δ̂ᵢ = T_REack - T_Lreq - T_Sum`
//! 3. err1 on stage `i + 1` only; `δ̂ᵢ = T_Error1 - T_Lreq - Σ_{k<i} δ̂ₖ - Δ̂ᵢ₊₁`
//!
//! Step 3 has no following controller for the last line, so
//! `δ̂ₙ₋₁ = T_Sum - Σ_{k<n-1} δ̂ₖ`. Later equations consume earlier
//! *measured* values, never nominals.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{quantize, ParasiticModel, TesterModel};
use crate::error::ModelError;
use crate::model::{scan_load_serial, LineKind, PipelineSpec, ScanState, ScanVector, Time};
use crate::sim::{simulate_with, EventTrace, Pin};

/// Anything the tester can reset, scan-load and stimulate.
pub trait Device {
    fn stage_count(&self) -> usize;

    /// Complete reset, then raise `Lreq` at `t0` with `scan` loaded.
    fn run(&self, scan: &ScanState, t0: Time) -> EventTrace;

    /// Design-time delays, when known. Only used for validation warnings.
    fn nominal(&self) -> Option<&PipelineSpec> {
        None
    }
}

/// The event-driven model of a pipeline, optionally with parasitic overheads.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDevice {
    pipeline: PipelineSpec,
    parasitics: ParasiticModel,
}

impl SimulatedDevice {
    pub fn new(pipeline: PipelineSpec) -> Self {
        let parasitics = ParasiticModel::zero(pipeline.len());
        SimulatedDevice {
            pipeline,
            parasitics,
        }
    }

    pub fn with_parasitics(
        pipeline: PipelineSpec,
        parasitics: ParasiticModel,
    ) -> Result<Self, ModelError> {
        parasitics.check(pipeline.len())?;
        Ok(SimulatedDevice {
            pipeline,
            parasitics,
        })
    }

    pub fn pipeline(&self) -> &PipelineSpec {
        &self.pipeline
    }

    pub fn parasitics(&self) -> &ParasiticModel {
        &self.parasitics
    }
}

impl Device for SimulatedDevice {
    fn stage_count(&self) -> usize {
        self.pipeline.len()
    }

    fn run(&self, scan: &ScanState, t0: Time) -> EventTrace {
        simulate_with(&self.pipeline, scan, t0, &self.parasitics)
    }

    fn nominal(&self) -> Option<&PipelineSpec> {
        Some(&self.pipeline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Step1,
    Step2,
    Step3,
}

impl Step {
    /// Pin whose first rise each step timestamps.
    pub fn response_pin(self) -> Pin {
        match self {
            Step::Step1 => Pin::Rreq,
            Step::Step2 => Pin::REack,
            Step::Step3 => Pin::Error1,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Step::Step1 => 1,
            Step::Step2 => 2,
            Step::Step3 => 3,
        };
        write!(f, "step {n}")
    }
}

/// A pair of tester timestamps from one run, already quantized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub step: Step,
    pub target: Option<usize>,
    pub t_lreq: Time,
    pub pin: Pin,
    pub t_pin: Time,
}

impl Measurement {
    /// `T_pin - T_Lreq`.
    pub fn elapsed(&self) -> i64 {
        self.t_pin.signed() - self.t_lreq.signed()
    }
}

/// A reported quantity: `T_Sum`, or one delay line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Quantity {
    TSum,
    Line(LineKind, usize),
}

impl Quantity {
    /// Reporting order: `T_Sum`, every Δ, every δ.
    pub fn all(stages: usize) -> Vec<Quantity> {
        let mut out = vec![Quantity::TSum];
        out.extend((0..stages).map(|i| Quantity::Line(LineKind::DeltaBig, i)));
        out.extend((0..stages).map(|i| Quantity::Line(LineKind::DeltaSmall, i)));
        out
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::TSum => f.write_str("t_sum"),
            Quantity::Line(kind, i) => write!(f, "{}[{i}]", kind.name()),
        }
    }
}

impl From<Quantity> for String {
    fn from(q: Quantity) -> String {
        q.to_string()
    }
}

impl FromStr for Quantity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "t_sum" {
            return Ok(Quantity::TSum);
        }
        let bad = || format!("unknown quantity {s:?}");
        let (name, rest) = s.split_once('[').ok_or_else(bad)?;
        let index = rest
            .strip_suffix(']')
            .and_then(|i| i.parse().ok())
            .ok_or_else(bad)?;
        let kind = match name {
            "delta_big" => LineKind::DeltaBig,
            "delta_small" => LineKind::DeltaSmall,
            _ => return Err(bad()),
        };
        Ok(Quantity::Line(kind, index))
    }
}

impl TryFrom<String> for Quantity {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("{step} (target {target:?}): {pin:?} never rose, pipeline stuck")]
    Stuck {
        step: Step,
        target: Option<usize>,
        pin: Pin,
    },
    #[error("step 3 (target {target}): Error1 never rose, pipeline stuck or OR-gate fault")]
    NoError1 { target: usize },
    #[error("{step}: target {index} out of range (valid 0..{limit})")]
    Target {
        step: Step,
        index: usize,
        limit: usize,
    },
    #[error("step 3 (target {target}): needs {target} earlier delta_small values, got {got}")]
    MissingPrior { target: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    P1Violated {
        stage: usize,
        delta_big_ps: u64,
        tail_sum_ps: u64,
    },
    Stuck {
        message: String,
    },
    InconsistentMeasurement {
        quantity: Quantity,
        value_ps: i64,
    },
    Skipped {
        quantity: Quantity,
    },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::P1Violated {
                stage,
                delta_big_ps,
                tail_sum_ps,
            } => write!(
                f,
                "P1 violated at stage {stage}: delta_big {delta_big_ps} ps exceeds downstream delta_small sum {tail_sum_ps} ps"
            ),
            Warning::Stuck { message } => f.write_str(message),
            Warning::InconsistentMeasurement { quantity, value_ps } => {
                write!(f, "inconsistent measurement: {quantity} = {value_ps} ps")
            }
            Warning::Skipped { quantity } => {
                write!(f, "{quantity} not measured: an earlier measurement failed")
            }
        }
    }
}

/// Measured values of one complete extraction, in signed picoseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub stages: usize,
    pub t_sum: Option<i64>,
    pub delta_big_hat: Vec<Option<i64>>,
    pub delta_small_hat: Vec<Option<i64>>,
    /// `T_Sum - Σ δ̂`.
    pub residual: Option<i64>,
    pub measurements: Vec<Measurement>,
    pub warnings: Vec<Warning>,
}

impl ExtractionReport {
    pub fn value(&self, q: Quantity) -> Option<i64> {
        match q {
            Quantity::TSum => self.t_sum,
            Quantity::Line(LineKind::DeltaBig, i) => self.delta_big_hat.get(i).copied().flatten(),
            Quantity::Line(LineKind::DeltaSmall, i) => {
                self.delta_small_hat.get(i).copied().flatten()
            }
        }
    }

    /// Every Δ̂ and δ̂ was obtained.
    pub fn is_complete(&self) -> bool {
        self.t_sum.is_some()
            && self.delta_big_hat.iter().all(Option::is_some)
            && self.delta_small_hat.iter().all(Option::is_some)
    }

    pub fn has_stuck(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, Warning::Stuck { .. } | Warning::Skipped { .. }))
    }

    /// True when every extracted line equals the pipeline's configured delay.
    pub fn matches(&self, pipeline: &PipelineSpec) -> bool {
        self.stages == pipeline.len()
            && (0..pipeline.len()).all(|i| {
                self.delta_big_hat[i] == Some(pipeline.delta_big(i).signed())
                    && self.delta_small_hat[i] == Some(pipeline.delta_small(i).signed())
            })
    }
}

/// One recorded measurement run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    /// `step1`, `step2_<i>` or `step3_<i>`.
    pub label: String,
    pub scan: ScanVector,
    pub t0: Time,
    pub trace: EventTrace,
}

#[derive(Debug, Clone)]
enum Stimulus {
    Fixed(Time),
    /// Uniform in `[0, r)` per run.
    RandomPhase(Box<ChaCha8Rng>),
}

/// Drives a [`Device`] through the measurement procedure.
pub struct Orchestrator<'d> {
    device: &'d dyn Device,
    tester: TesterModel,
    stimulus: Stimulus,
    record: bool,
    runs: Vec<RunRecord>,
}

impl<'d> Orchestrator<'d> {
    /// Ideal tester, `Lreq` raised at time zero.
    pub fn new(device: &'d dyn Device) -> Self {
        Orchestrator {
            device,
            tester: TesterModel::ideal(),
            stimulus: Stimulus::Fixed(Time::ZERO),
            record: false,
            runs: Vec::new(),
        }
    }

    pub fn with_tester(mut self, tester: TesterModel) -> Self {
        self.tester = tester;
        self
    }

    pub fn with_t0(mut self, t0: Time) -> Self {
        self.stimulus = Stimulus::Fixed(t0);
        self
    }

    /// Each run starts at a random phase of the tester clock.
    pub fn with_random_phase(self, rng: ChaCha8Rng) -> Self {
        Orchestrator {
            stimulus: Stimulus::RandomPhase(Box::new(rng)),
            ..self
        }
    }

    pub fn with_seeded_phase(self, seed: u64) -> Self {
        self.with_random_phase(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Keep every run's trace for later inspection.
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn runs(&self) -> &[RunRecord] {
        &self.runs
    }

    pub fn into_runs(self) -> Vec<RunRecord> {
        self.runs
    }

    fn stages(&self) -> usize {
        self.device.stage_count()
    }

    fn next_t0(&mut self) -> Time {
        match &mut self.stimulus {
            Stimulus::Fixed(t) => *t,
            Stimulus::RandomPhase(rng) => {
                let r = self.tester.resolution.as_ps().max(1);
                Time::from_ps(rng.random_range(0..r))
            }
        }
    }

    fn measure(
        &mut self,
        step: Step,
        target: Option<usize>,
        scan: ScanVector,
    ) -> Result<Measurement, StepError> {
        let t0 = self.next_t0();
        let state = scan_load_serial(self.stages(), &scan.shift_sequence())
            .expect("scan vector built for this device");
        let trace = self.device.run(&state, t0);
        let pin = step.response_pin();
        let t_lreq = trace.pin(Pin::Lreq).unwrap_or(t0);
        let observed = trace.pin(pin);
        if self.record {
            let label = match target {
                Some(i) => format!("{}_{i}", step_label(step)),
                None => step_label(step).to_string(),
            };
            self.runs.push(RunRecord {
                label,
                scan,
                t0,
                trace,
            });
        }
        let t_pin = match (observed, step) {
            (Some(t), _) => t,
            (None, Step::Step3) => {
                return Err(StepError::NoError1 {
                    target: target.unwrap_or_default(),
                })
            }
            (None, _) => return Err(StepError::Stuck { step, target, pin }),
        };
        Ok(Measurement {
            step,
            target,
            t_lreq: quantize(t_lreq, &self.tester),
            pin,
            t_pin: quantize(t_pin, &self.tester),
        })
    }

    /// All SQFs forced to err0; returns the measurement and `T_Sum`.
    pub fn run_step1(&mut self) -> Result<(Measurement, i64), StepError> {
        let m = self.measure(Step::Step1, None, ScanVector::all_err0(self.stages()))?;
        let t_sum = m.elapsed();
        Ok((m, t_sum))
    }

    /// Only SQF `i` forced to err1; returns `Δ̂ᵢ`.
    pub fn run_step2(&mut self, i: usize, t_sum: i64) -> Result<(Measurement, i64), StepError> {
        let n = self.stages();
        if i >= n {
            return Err(StepError::Target {
                step: Step::Step2,
                index: i,
                limit: n,
            });
        }
        let m = self.measure(Step::Step2, Some(i), ScanVector::single_err1(n, i))?;
        let delta_big = m.elapsed() - t_sum;
        Ok((m, delta_big))
    }

    /// Only SQF `i + 1` forced to err1; returns `δ̂ᵢ` for `i` in `0..n-1`.
    ///
    /// `prior_small` holds `δ̂₀..δ̂ᵢ₋₁` and `delta_big_next` is `Δ̂ᵢ₊₁`.
    pub fn run_step3(
        &mut self,
        i: usize,
        prior_small: &[i64],
        delta_big_next: i64,
    ) -> Result<(Measurement, i64), StepError> {
        let n = self.stages();
        if i + 1 >= n {
            return Err(StepError::Target {
                step: Step::Step3,
                index: i,
                limit: n - 1,
            });
        }
        if prior_small.len() < i {
            return Err(StepError::MissingPrior {
                target: i,
                got: prior_small.len(),
            });
        }
        let m = self.measure(Step::Step3, Some(i), ScanVector::single_err1(n, i + 1))?;
        let upstream: i64 = prior_small[..i].iter().sum();
        let delta_small = m.elapsed() - upstream - delta_big_next;
        Ok((m, delta_small))
    }

    /// Steps 1 to 3 plus the derived last line, continuing past failures.
    pub fn extract_all(&mut self) -> ExtractionReport {
        let n = self.stages();
        let mut warnings: Vec<Warning> = self
            .device
            .nominal()
            .map(|p| p.validate().warnings)
            .unwrap_or_default()
            .into_iter()
            .map(|w| match w {
                crate::model::ValidationWarning::P1Violated {
                    stage,
                    delta_big,
                    tail_sum,
                } => Warning::P1Violated {
                    stage,
                    delta_big_ps: delta_big.as_ps(),
                    tail_sum_ps: tail_sum.as_ps(),
                },
            })
            .collect();
        let mut measurements = Vec::new();

        let check = |q: Quantity, v: i64, warnings: &mut Vec<Warning>| {
            if v < 0 {
                warnings.push(Warning::InconsistentMeasurement {
                    quantity: q,
                    value_ps: v,
                });
            }
        };

        let t_sum = match self.run_step1() {
            Ok((m, t)) => {
                measurements.push(m);
                check(Quantity::TSum, t, &mut warnings);
                Some(t)
            }
            Err(e) => {
                warnings.push(Warning::Stuck {
                    message: e.to_string(),
                });
                None
            }
        };

        let mut delta_big_hat = vec![None; n];
        for (i, slot) in delta_big_hat.iter_mut().enumerate() {
            let q = Quantity::Line(LineKind::DeltaBig, i);
            let Some(t_sum) = t_sum else {
                warnings.push(Warning::Skipped { quantity: q });
                continue;
            };
            match self.run_step2(i, t_sum) {
                Ok((m, v)) => {
                    measurements.push(m);
                    check(q, v, &mut warnings);
                    *slot = Some(v);
                }
                Err(e) => warnings.push(Warning::Stuck {
                    message: e.to_string(),
                }),
            }
        }

        let mut delta_small_hat: Vec<Option<i64>> = vec![None; n];
        for i in 0..n - 1 {
            let q = Quantity::Line(LineKind::DeltaSmall, i);
            let prior: Option<Vec<i64>> = delta_small_hat[..i].iter().copied().collect();
            let (Some(prior), Some(next_big)) = (prior, delta_big_hat[i + 1]) else {
                warnings.push(Warning::Skipped { quantity: q });
                continue;
            };
            match self.run_step3(i, &prior, next_big) {
                Ok((m, v)) => {
                    measurements.push(m);
                    check(q, v, &mut warnings);
                    delta_small_hat[i] = Some(v);
                }
                Err(e) => warnings.push(Warning::Stuck {
                    message: e.to_string(),
                }),
            }
        }

        let last = Quantity::Line(LineKind::DeltaSmall, n - 1);
        let prior: Option<Vec<i64>> = delta_small_hat[..n - 1].iter().copied().collect();
        match (t_sum, prior) {
            (Some(t_sum), Some(prior)) => {
                let v = derive_last_delta(t_sum, &prior);
                check(last, v, &mut warnings);
                delta_small_hat[n - 1] = Some(v);
            }
            _ => warnings.push(Warning::Skipped { quantity: last }),
        }

        let residual = match (
            t_sum,
            delta_small_hat
                .iter()
                .copied()
                .collect::<Option<Vec<i64>>>(),
        ) {
            (Some(t), Some(small)) => Some(t - small.iter().sum::<i64>()),
            _ => None,
        };

        ExtractionReport {
            stages: n,
            t_sum,
            delta_big_hat,
            delta_small_hat,
            residual,
            measurements,
            warnings,
        }
    }
}

fn step_label(step: Step) -> &'static str {
    match step {
        Step::Step1 => "step1",
        Step::Step2 => "step2",
        Step::Step3 => "step3",
    }
}

/// `δ̂ₙ₋₁ = T_Sum - Σ δ̂ₖ` over the measured earlier lines.
pub fn derive_last_delta(t_sum: i64, prior_small: &[i64]) -> i64 {
    t_sum - prior_small.iter().sum::<i64>()
}

/// Ideal-tester extraction of a simulated pipeline.
pub fn extract_all(device: &dyn Device) -> ExtractionReport {
    Orchestrator::new(device).extract_all()
}

/// Nominal delays and the symmetric relative tolerance a line may deviate by.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingSpec {
    nominal: PipelineSpec,
    tolerance: f64,
}

impl TimingSpec {
    pub fn new(nominal: PipelineSpec, tolerance: f64) -> Result<Self, ModelError> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(ModelError::Tolerance(tolerance));
        }
        Ok(TimingSpec { nominal, tolerance })
    }

    pub fn nominal(&self) -> &PipelineSpec {
        &self.nominal
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Ok,
    /// Below `nominal·(1 - tol)`; a fast δ line no longer covers its data path.
    TooFast,
    TooSlow,
    NotMeasured,
}

impl Verdict {
    pub fn is_fault(self) -> bool {
        self != Verdict::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineVerdict {
    pub line: Quantity,
    pub nominal_ps: u64,
    pub measured_ps: Option<i64>,
    pub verdict: Verdict,
}

/// Classifies every delay line, Δ lines first, strict against `nominal·(1±tol)`.
pub fn judge(report: &ExtractionReport, spec: &TimingSpec) -> Vec<LineVerdict> {
    let n = spec.nominal.len();
    [LineKind::DeltaBig, LineKind::DeltaSmall]
        .into_iter()
        .flat_map(|kind| (0..n).map(move |i| (kind, i)))
        .map(|(kind, i)| {
            let line = Quantity::Line(kind, i);
            let nominal = spec.nominal.line(kind, i).as_ps();
            let measured = report.value(line);
            let lo = nominal as f64 * (1.0 - spec.tolerance);
            let hi = nominal as f64 * (1.0 + spec.tolerance);
            let verdict = match measured {
                None => Verdict::NotMeasured,
                Some(v) if (v as f64) < lo => Verdict::TooFast,
                Some(v) if (v as f64) > hi => Verdict::TooSlow,
                Some(_) => Verdict::Ok,
            };
            LineVerdict {
                line,
                nominal_ps: nominal,
                measured_ps: measured,
                verdict,
            }
        })
        .collect()
}
