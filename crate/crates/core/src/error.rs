use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("profile of point ({i}, {j}) has length {len}, shorter than horizon {horizon}")]
    ProfileTooShort {
        i: usize,
        j: usize,
        len: usize,
        horizon: usize,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the user's configuration rather than by the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ProfileTooShort { .. })
    }
}
