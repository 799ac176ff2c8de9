use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SetrError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] setr_core::Error),
}

impl SetrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SetrError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for everything
    /// that failed at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            SetrError::Config(_) | SetrError::Core(setr_core::Error::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, SetrError>;
