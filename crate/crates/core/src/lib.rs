// SPDX-License-Identifier: Apache-2.0

//! Delay-line test model for Blade bundled-data pipelines.
//!
//! The crate is split along the flow of a test session:
//!
//! - [`model`]: pipeline description, scan chain and the analytic timing schedule
//! - [`sim`]: event-driven simulation of the controllers, traces and VCD output
//! - [`orchestrator`]: the three-step measurement procedure and verdicts
//! - [`analysis`]: tester quantization, fault injection, parasitics, error bounds
//! - [`area`]: DfT area and transistor-count estimates

pub mod analysis;
pub mod area;
pub mod error;
pub mod interval;
pub mod model;
pub mod orchestrator;
pub mod sim;

pub use error::ModelError;
pub use model::{ForcedError, PipelineSpec, ScanState, ScanVector, Schedule, StageSpec, Time};
