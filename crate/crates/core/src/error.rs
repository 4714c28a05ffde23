use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum SviError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training diverged at epoch {epoch}: non-finite loss {value}")]
    Training { epoch: usize, value: f64 },

    #[error("selection failed: every candidate failed to train")]
    Selection,

    #[error("non-numeric cell at row {row}, column {col}: {cell:?}")]
    Parse { row: usize, col: usize, cell: String },

    #[error("column {0:?} not found")]
    MissingColumn(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SviError>;

impl SviError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SviError::Io {
            path: path.into(),
            source,
        }
    }
}
