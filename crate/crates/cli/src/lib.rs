//! Command-line front end: simulate a biphoton source, reconstruct its temporal
//! waveform from the six-setting histograms, score the source statistics, or run
//! all three and check thresholds.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 threshold miss.

use std::path::Path;

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{metrics, pipeline, reconstruct, simulate, PipelineReport};
pub use config::{RunConfig, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("threshold miss: {}", .0.join("; "))]
    Threshold(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Threshold(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with the pipeline stage that failed.
    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            Self::Config(m) => Self::Config(format!("{stage}: {m}")),
            Self::Data(m) => Self::Data(format!("{stage}: {m}")),
            t @ Self::Threshold(_) => t,
        }
    }
}
