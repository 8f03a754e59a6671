//! Experiment runner: leave-one-site-out pretraining, target-site
//! calibration sweeps, ablations and effective-rate accounting.

pub mod config;
pub mod data;
pub mod experiments;
pub mod metrics;
pub mod pipeline;

use thiserror::Error;

pub use config::{ExperimentConfig, SchemeKind, SchemeSpec};
pub use metrics::{emit_csv, emit_plot_script, read_csv, MetricsRecord, CSV_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(#[from] sifo_core::Error),

    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
