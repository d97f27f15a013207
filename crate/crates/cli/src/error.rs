use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Ingest { path: PathBuf, message: String },
    #[error("{0}")]
    Run(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn ingest(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Ingest { path: path.to_path_buf(), message: err.to_string() }
    }

    pub fn run(err: impl std::fmt::Display) -> Self {
        CliError::Run(err.to_string())
    }
}
