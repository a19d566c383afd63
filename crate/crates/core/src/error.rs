use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = WatsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum WatsError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite loss at epoch {epoch} (parameter norm {param_norm:.6e})")]
    NonFiniteLoss { epoch: usize, param_norm: f64 },

    #[error("problem too large for dense computation: {size} > {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("validation split required")]
    MissingValidation,

    #[error("incompatible reports: {0}")]
    IncompatibleReports(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl WatsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        WatsError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a file path to parse-style errors so messages name the file.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ WatsError::Io { .. } | e @ WatsError::File { .. } => e,
            other => WatsError::File {
                path: path.into(),
                message: other.to_string(),
            },
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, WatsError::NonFiniteLoss { .. })
    }
}
