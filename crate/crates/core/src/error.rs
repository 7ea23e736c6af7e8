use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the unmixing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A file did not match its expected layout.
    #[error("format error: {0}")]
    Format(String),
    /// Input data violates an invariant (shape, finiteness, coverage).
    #[error("data error: {0}")]
    Data(String),
    /// A configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// A numerical routine failed (factorization, divergence, non-convergence).
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
