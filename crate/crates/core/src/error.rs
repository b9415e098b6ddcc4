// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Construction and precondition failures across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("pipeline needs at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("stage {stage} ({name}): {line} delay must be positive")]
    NonPositiveDelay {
        stage: usize,
        name: String,
        line: &'static str,
    },
    #[error("duplicate stage name {0:?}")]
    DuplicateName(String),
    #[error("expected {expected} scan bits, got {got}")]
    ScanLength { expected: usize, got: usize },
    #[error("stage index {index} out of range for {stages} stages")]
    StageIndex { index: usize, stages: usize },
    #[error("fault on {line} of stage {stage} leaves a non-positive delay ({value})")]
    FaultOutOfRange {
        line: &'static str,
        stage: usize,
        value: f64,
    },
    #[error("parasitic model has {got} entries for {expected} stages")]
    ParasiticLength { expected: usize, got: usize },
    #[error("tester resolution must be positive")]
    ZeroResolution,
    #[error("tolerance must lie in (0, 1), got {0}")]
    Tolerance(f64),
    #[error("stage count must be at least 1")]
    ZeroStages,
    #[error("invalid data width {0}: must be a positive multiple of 8")]
    InvalidWidth(u32),
    #[error("cell library value {0} must be positive")]
    CellValue(&'static str),
    #[error("trial count must be at least 1")]
    ZeroTrials,
}
