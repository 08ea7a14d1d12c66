//! Run manifests: config echo, per-check pass/fail, numeric summaries.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// Threshold check with a uniform detail format.
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        CheckResult::new(
            name,
            value <= bound,
            format!("value {value:.3e} <= bound {bound:.3e}"),
        )
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        CheckResult::new(
            name,
            (value - target).abs() <= tol,
            format!("value {value:.6} within {tol} of {target}"),
        )
    }
}

/// Everything a run leaves behind besides the tables themselves.
///
/// Numeric summaries are keyed in a sorted map so reruns with the same
/// config and seed serialize to identical bytes; the timestamp is the only
/// field outside that contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub created_unix_ms: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckResult>,
    pub summaries: BTreeMap<String, f64>,
    /// Emitted files with their content digests.
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub fnv1a: String,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig) -> Self {
        let created_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            created_unix_ms,
            config,
            checks: Vec::new(),
            summaries: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn record_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.push(OutputFile {
            name: name.into(),
            fnv1a: format!("{:016x}", crate::tables::fnv1a(bytes)),
        });
    }
}
