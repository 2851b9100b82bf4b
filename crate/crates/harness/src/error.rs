use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] scalechan::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("metrics file: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint not found: {}", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("{failed} of {total} verification checks failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl HarnessError {
    /// Short stable identifier for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Core(_) => "core",
            HarnessError::Config(_) | HarnessError::Toml(_) => "config",
            HarnessError::Io(_) => "io",
            HarnessError::Csv(_) => "metrics",
            HarnessError::MissingCheckpoint(_) => "missing_checkpoint",
            HarnessError::VerifyFailed { .. } => "verify_failed",
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
