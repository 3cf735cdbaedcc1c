use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::engine::Treatment;

/// Invalid configuration or domain input.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl ConfigError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid { field, reason: reason.into() }
    }
}

/// Failures while running experiments or reading and writing their files.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed table: {0}")]
    Table(String),
    #[error("sample grids differ: {0}")]
    GridMismatch(String),
    #[error("run {run} ({treatment}) failed: {source}")]
    Run { treatment: Treatment, run: usize, source: Box<HarnessError> },
    #[error("{failed} of {total} runs failed; partial results listed in {manifest}")]
    Partial { failed: usize, total: usize, manifest: PathBuf },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// True when the failure stems from configuration rather than runtime.
    pub fn is_config(&self) -> bool {
        match self {
            Self::Config(_) => true,
            Self::Run { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
