//! Experiment driver for the conic-scattering library: JSON-configured runs
//! with deterministic CSV/JSON tables and a pass/fail manifest.

// `!(x > 0)` guards reject NaN along with the wrong sign.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod tables;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, CliResult};
pub use experiments::{run, run_and_write, RunOutput};
pub use manifest::{CheckResult, RunManifest};
