use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Datastore(#[from] purrfect_core::datastore::DatastoreError),
    #[error(transparent)]
    Session(#[from] purrfect_core::session::SessionError),
    #[error(transparent)]
    Stats(#[from] purrfect_stats::StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}
