// SPDX-License-Identifier: Apache-2.0

//! Pipeline under test, scan chain and the analytic timing schedule.
//!
//! Stage `i` owns two delay lines: `delta_big` sets the high phase of its
//! `CLK`, and `delta_small` sits on its request-forwarding path towards
//! stage `i + 1` (or the right pin for the last stage). All gates, wires and
//! handshakes outside the delay lines are zero-delay, and each run carries a
//! single rising request through an empty pipeline.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::analysis::ParasiticModel;
use crate::error::ModelError;

/// Integer picoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Time(u64);

impl Time {
    pub const ZERO: Time = Time(0);

    pub const fn from_ps(ps: u64) -> Self {
        Time(ps)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    /// Signed view, for differences between timestamps.
    pub fn signed(self) -> i64 {
        i64::try_from(self.0).expect("time exceeds i64 range")
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl AddAssign for Time {
    fn add_assign(&mut self, rhs: Time) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Time {
    fn sum<I: Iterator<Item = Time>>(iter: I) -> Time {
        iter.fold(Time::ZERO, Add::add)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

/// One controller and the data-path delay line that follows it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    /// Clock high-phase delay line.
    #[serde(rename = "delta_big_ps")]
    pub delta_big: Time,
    /// Data-path compensation delay line on the forwarded request.
    #[serde(rename = "delta_small_ps")]
    pub delta_small: Time,
}

impl StageSpec {
    pub fn new(name: impl Into<String>, delta_big: u64, delta_small: u64) -> Self {
        StageSpec {
            name: name.into(),
            delta_big: Time(delta_big),
            delta_small: Time(delta_small),
        }
    }
}

/// A linear pipeline of at least two stages with positive delays and unique names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StageSpec>", into = "Vec<StageSpec>")]
pub struct PipelineSpec {
    stages: Vec<StageSpec>,
}

impl TryFrom<Vec<StageSpec>> for PipelineSpec {
    type Error = ModelError;
    fn try_from(stages: Vec<StageSpec>) -> Result<Self, ModelError> {
        PipelineSpec::new(stages)
    }
}

impl From<PipelineSpec> for Vec<StageSpec> {
    fn from(p: PipelineSpec) -> Self {
        p.stages
    }
}

impl PipelineSpec {
    pub fn new(stages: Vec<StageSpec>) -> Result<Self, ModelError> {
        if stages.len() < 2 {
            return Err(ModelError::TooFewStages(stages.len()));
        }
        let mut names = HashSet::new();
        for (i, s) in stages.iter().enumerate() {
            for (line, value) in [("delta_big", s.delta_big), ("delta_small", s.delta_small)] {
                if value == Time::ZERO {
                    return Err(ModelError::NonPositiveDelay {
                        stage: i,
                        name: s.name.clone(),
                        line,
                    });
                }
            }
            if !names.insert(s.name.as_str()) {
                return Err(ModelError::DuplicateName(s.name.clone()));
            }
        }
        Ok(PipelineSpec { stages })
    }

    /// Builds a pipeline named `C0..C{n-1}` from `(delta_big, delta_small)` pairs.
    pub fn from_delays(delays: &[(u64, u64)]) -> Result<Self, ModelError> {
        PipelineSpec::new(
            delays
                .iter()
                .enumerate()
                .map(|(i, &(big, small))| StageSpec::new(format!("C{i}"), big, small))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn stage(&self, i: usize) -> &StageSpec {
        &self.stages[i]
    }

    pub fn delta_big(&self, i: usize) -> Time {
        self.stages[i].delta_big
    }

    pub fn delta_small(&self, i: usize) -> Time {
        self.stages[i].delta_small
    }

    pub(crate) fn stage_mut(&mut self, i: usize) -> &mut StageSpec {
        &mut self.stages[i]
    }

    /// Sum of `delta_small` from stage `j` to the end of the pipeline.
    pub fn tail_sum(&self, j: usize) -> Time {
        self.stages[j..].iter().map(|s| s.delta_small).sum()
    }

    pub fn total_delta_small(&self) -> Time {
        self.tail_sum(0)
    }

    /// Timing check: each clock phase must fit inside the remaining data-path
    /// delay, otherwise a stage's extension outlasts the output request and
    /// the extraction equations stop being exact.
    pub fn validate(&self) -> ValidationResult {
        let warnings = (0..self.len())
            .filter_map(|j| {
                let tail = self.tail_sum(j);
                (self.delta_big(j) > tail).then(|| ValidationWarning::P1Violated {
                    stage: j,
                    delta_big: self.delta_big(j),
                    tail_sum: tail,
                })
            })
            .collect();
        ValidationResult { warnings }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationWarning {
    P1Violated {
        stage: usize,
        delta_big: Time,
        tail_sum: Time,
    },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::P1Violated {
                stage,
                delta_big,
                tail_sum,
            } => write!(
                f,
                "P1 violated at stage {stage}: delta_big {delta_big} exceeds downstream delta_small sum {tail_sum}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationResult {
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// The two kinds of delay line owned by a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    /// Clock high-phase line, Δ.
    DeltaBig,
    /// Data-path compensation line, δ.
    DeltaSmall,
}

impl LineKind {
    pub fn name(self) -> &'static str {
        match self {
            LineKind::DeltaBig => "delta_big",
            LineKind::DeltaSmall => "delta_small",
        }
    }
}

impl PipelineSpec {
    pub fn line(&self, kind: LineKind, stage: usize) -> Time {
        match kind {
            LineKind::DeltaBig => self.delta_big(stage),
            LineKind::DeltaSmall => self.delta_small(stage),
        }
    }
}

/// Outcome an SQF is forced to resolve after `Sample` rises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcedError {
    Err0,
    Err1,
}

impl ForcedError {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            ForcedError::Err1
        } else {
            ForcedError::Err0
        }
    }

    pub fn bit(self) -> bool {
        self == ForcedError::Err1
    }
}

/// Requested per-stage outcomes; bit `i` drives the SQF of controller `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScanVector(Vec<ForcedError>);

impl ScanVector {
    pub fn new(bits: Vec<ForcedError>) -> Self {
        ScanVector(bits)
    }

    pub fn uniform(n: usize, value: ForcedError) -> Self {
        ScanVector(vec![value; n])
    }

    pub fn all_err0(n: usize) -> Self {
        Self::uniform(n, ForcedError::Err0)
    }

    /// Err1 on `target`, Err0 everywhere else.
    pub fn single_err1(n: usize, target: usize) -> Self {
        ScanVector((0..n).map(|i| ForcedError::from_bit(i == target)).collect())
    }

    /// Low `n` bits of `mask`, bit `i` for stage `i`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        ScanVector(
            (0..n)
                .map(|i| ForcedError::from_bit(mask >> i & 1 == 1))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[ForcedError] {
        &self.0
    }

    /// Order in which the bits must be shifted into the chain so that
    /// [`scan_load_serial`] reproduces this vector: highest stage first.
    pub fn shift_sequence(&self) -> Vec<bool> {
        self.0.iter().rev().map(|b| b.bit()).collect()
    }
}

/// Contents of the SQF chain after loading.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScanState {
    sqf: Vec<ForcedError>,
}

impl ScanState {
    pub fn len(&self) -> usize {
        self.sqf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sqf.is_empty()
    }

    pub fn forced(&self, stage: usize) -> ForcedError {
        self.sqf[stage]
    }

    pub fn bits(&self) -> &[ForcedError] {
        &self.sqf
    }

    pub fn to_vector(&self) -> ScanVector {
        ScanVector(self.sqf.clone())
    }
}

/// Serial scan chain through the SQFs of an `n`-stage pipeline.
///
/// Scan-in enters at stage 0 and each shift moves every bit one stage
/// up, so after `n` shifts the first bit shifted in sits at stage `n - 1`.
#[derive(Debug, Clone)]
pub struct ScanChain {
    cells: Vec<bool>,
}

impl ScanChain {
    pub fn new(n: usize) -> Self {
        ScanChain {
            cells: vec![false; n],
        }
    }

    /// One shift pulse. Returns the bit leaving the chain at scan-out.
    pub fn shift(&mut self, scan_in: bool) -> bool {
        let out = self.cells.pop().unwrap_or(scan_in);
        self.cells.insert(0, scan_in);
        out
    }

    pub fn state(&self) -> ScanState {
        ScanState {
            sqf: self
                .cells
                .iter()
                .copied()
                .map(ForcedError::from_bit)
                .collect(),
        }
    }
}

/// Loads the chain of an `stages`-long pipeline in parallel.
pub fn scan_load_direct(stages: usize, scan: &ScanVector) -> Result<ScanState, ModelError> {
    check_scan_len(stages, scan.len())?;
    Ok(ScanState {
        sqf: scan.bits().to_vec(),
    })
}

/// Shifts exactly `stages` bits through the chain (`true` = Err1).
pub fn scan_load_serial(stages: usize, bits: &[bool]) -> Result<ScanState, ModelError> {
    check_scan_len(stages, bits.len())?;
    let mut chain = ScanChain::new(stages);
    for &b in bits {
        chain.shift(b);
    }
    Ok(chain.state())
}

fn check_scan_len(stages: usize, got: usize) -> Result<(), ModelError> {
    if got != stages {
        return Err(ModelError::ScanLength {
            expected: stages,
            got,
        });
    }
    Ok(())
}

/// Analytic edge times of one run. Index `i` is the stage; `arrival` has
/// `N + 1` entries, the last being the output request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub arrival: Vec<Time>,
    pub clk_rise: Vec<Time>,
    pub sample_rise: Vec<Time>,
    pub err_rise: Vec<Time>,
    pub extension_end: Vec<Time>,
    pub rreq_out: Time,
    pub reack_out: Time,
    pub error1_rise: Option<Time>,
}

pub fn closed_form_schedule(
    pipeline: &PipelineSpec,
    scan: &ScanVector,
    t0: Time,
) -> Result<Schedule, ModelError> {
    closed_form_schedule_with(pipeline, scan, t0, &ParasiticModel::zero(pipeline.len()))
}

/// Closed form including non-delay-line overheads. With the all-zero
/// parasitic model this is exactly [`closed_form_schedule`].
pub fn closed_form_schedule_with(
    pipeline: &PipelineSpec,
    scan: &ScanVector,
    t0: Time,
    parasitics: &ParasiticModel,
) -> Result<Schedule, ModelError> {
    check_scan_len(pipeline.len(), scan.len())?;
    parasitics.check(pipeline.len())?;
    let n = pipeline.len();

    let mut arrival = Vec::with_capacity(n + 1);
    arrival.push(t0);
    for (i, &forced) in scan.bits().iter().enumerate() {
        let mut next = arrival[i] + pipeline.delta_small(i) + parasitics.forwarding[i];
        if forced == ForcedError::Err1 {
            next += pipeline.delta_big(i);
        }
        arrival.push(next);
    }

    let clk_rise = arrival[..n].to_vec();
    let sample_rise: Vec<Time> = (0..n)
        .map(|i| arrival[i] + pipeline.delta_big(i) + parasitics.sampling[i])
        .collect();
    let err_rise = sample_rise.clone();
    let extension_end: Vec<Time> = (0..n)
        .map(|i| match scan.bits()[i] {
            ForcedError::Err1 => sample_rise[i] + pipeline.delta_big(i),
            ForcedError::Err0 => sample_rise[i],
        })
        .collect();

    let rreq_out = arrival[n];
    let settled = extension_end.iter().copied().fold(rreq_out, Time::max);
    let reack_out = settled + parasitics.reack;
    let error1_rise = scan
        .bits()
        .iter()
        .zip(&err_rise)
        .filter(|(f, _)| **f == ForcedError::Err1)
        .map(|(_, &t)| t)
        .min()
        .map(|t| t + parasitics.observation);

    Ok(Schedule {
        arrival,
        clk_rise,
        sample_rise,
        err_rise,
        extension_end,
        rreq_out,
        reack_out,
        error1_rise,
    })
}
