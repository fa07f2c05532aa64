use std::path::PathBuf;

/// Errors produced anywhere in the evaluation engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input values violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two volumes that must share a shape do not.
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: Vec<usize>, found: Vec<usize> },

    /// A file could not be decoded.
    #[error("{format} decode error: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
