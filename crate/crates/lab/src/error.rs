use std::io;

use thiserror::Error;

/// Failures reading or writing lab artefacts.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("corrupt frame dataset: {0}")]
    CorruptDataset(String),
    #[error(transparent)]
    Core(#[from] transferlab_core::error::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metrics csv: {0}")]
    Metrics(String),
}

pub type Result<T> = std::result::Result<T, FormatError>;
