// SPDX-License-Identifier: Apache-2.0

//! JSON configuration file.
//!
//! ```json
//! {
//!   "stages": [
//!     { "name": "C0", "delta_big_ps": 60, "delta_small_ps": 100 },
//!     { "name": "C1", "delta_big_ps": 70, "delta_small_ps": 150 }
//!   ],
//!   "tester": { "resolution_ps": 8, "rounding": "nearest", "ideal": false },
//!   "tolerance_pct": 5.0,
//!   "parasitics": { "w": [0, 0], "u": [0, 0], "v": 0, "rho": 0 },
//!   "area": { "a_control": 27.0 },
//!   "seed": 0
//! }
//! ```
//!
//! Only `stages` is required. A missing `tester` means an ideal tester.

use std::fs;
use std::path::Path;

use blade_dlt_core::analysis::{ParasiticModel, TesterModel};
use blade_dlt_core::area::CellLibrary;
use blade_dlt_core::orchestrator::TimingSpec;
use blade_dlt_core::{ModelError, PipelineSpec, StageSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_tolerance_pct() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub tester: TesterModel,
    #[serde(default = "default_tolerance_pct")]
    pub tolerance_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parasitics: Option<ParasiticModel>,
    #[serde(default)]
    pub area: CellLibrary,
    #[serde(default)]
    pub seed: u64,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Config, CliError> {
        let config: Config =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config
            .tester
            .check()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn pipeline(&self) -> Result<PipelineSpec, ModelError> {
        PipelineSpec::new(self.stages.clone())
    }

    pub fn parasitics_for(&self, pipeline: &PipelineSpec) -> Result<ParasiticModel, ModelError> {
        let p = self
            .parasitics
            .clone()
            .unwrap_or_else(|| ParasiticModel::zero(pipeline.len()));
        p.check(pipeline.len())?;
        Ok(p)
    }

    pub fn timing_spec(&self, nominal: PipelineSpec) -> Result<TimingSpec, ModelError> {
        TimingSpec::new(nominal, self.tolerance_pct / 100.0)
    }
}
