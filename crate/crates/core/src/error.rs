use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} column {column} is constant; cannot derive a scaling")]
    ConstantColumn { what: &'static str, column: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("damped normal equations are not positive definite (lambda = {lambda:e})")]
    Singular { lambda: f64 },

    #[error("model file: {0}")]
    Model(String),

    #[error("dataset line {line}: {msg}")]
    Dataset { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
