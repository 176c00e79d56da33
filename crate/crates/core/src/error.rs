use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the zero-shot pipeline.
#[derive(Debug, Error)]
pub enum ZslError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced a non-finite value or hit a singular system.
    #[error("numeric failure at {location}: {message}")]
    NumericFailure { location: String, message: String },

    #[error("format error in {path} at byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ZslError> = std::result::Result<T, E>;

impl ZslError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ZslError::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(location: impl Into<String>, message: impl Into<String>) -> Self {
        ZslError::NumericFailure {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZslError::Io {
            path: path.into(),
            source,
        }
    }
}
