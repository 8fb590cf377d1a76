//! Experiment runner for the mirror-descent method of successive
//! approximations: configuration, orchestration of the LQ, quartic,
//! high-dimensional, gradient-check and custom experiments, and their
//! CSV/JSON artifacts.

pub mod config;
pub mod experiments;
pub mod output;

use thiserror::Error;

pub use config::{ConfigError, Experiment, ExperimentConfig, PartialConfig, Window};
pub use experiments::{run_custom, run_experiment, run_gradcheck, run_highdim, run_lq, run_quartic};
pub use output::{CheckResult, ExperimentSummary, RunSummary};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] mirror_msa::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit code: `2` for configuration errors, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}
