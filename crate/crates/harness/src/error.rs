use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] pvrow_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error("no samples inside the metric window")]
    EmptyWindow,
}

impl HarnessError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Core(_) => "core",
            Self::Io { .. } => "io",
            Self::Config { .. } => "config",
            Self::Invalid(_) => "invalid",
            Self::Csv(_) => "csv",
            Self::Trace(_) => "trace",
            Self::EmptyWindow => "empty_window",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
