//! Experiment driver for open tri-baker maps: parameter scans, figure data,
//! operator caching and the acceptance suite.

pub mod acceptance;
pub mod args;
pub mod cache;
pub mod commands;
pub mod config;
pub mod manifest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Numerical(#[from] tribaker::Error),

    #[error("acceptance failed: {0}")]
    Acceptance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 usage, 2 numerical failure, 3 acceptance failure. I/O and encoding
    /// problems count as numerical failures of the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Acceptance(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) | CliError::Json(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
