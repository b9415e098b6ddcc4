// SPDX-License-Identifier: Apache-2.0

use blade_dlt_core::analysis::ErrorBounds;
use blade_dlt_core::orchestrator::{ExtractionReport, LineVerdict};
use serde::{Deserialize, Serialize};

use crate::config::Config;

/// Output of `extract`, written as pretty JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool_version: String,
    pub config: Config,
    /// Seed actually used, after any environment override.
    pub seed: u64,
    pub faults: Vec<String>,
    pub extraction: ExtractionReport,
    pub verdicts: Vec<LineVerdict>,
    pub warnings: Vec<String>,
    /// Present only for a non-ideal tester.
    pub error_bounds: Option<ErrorBounds>,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn has_fault(&self) -> bool {
        self.extraction.has_stuck() || self.verdicts.iter().any(|v| v.verdict.is_fault())
    }
}
