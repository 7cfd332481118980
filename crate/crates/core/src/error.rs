use std::path::PathBuf;

use thiserror::Error;

use crate::linalg::IndexSet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scalar field mismatch: expected {expected}, found {found}")]
    FieldMismatch {
        expected: crate::linalg::ScalarField,
        found: crate::linalg::ScalarField,
    },

    /// Ridge system could not be factored even with the variance floor applied.
    #[error("numeric failure on support {support} at iteration {iteration}: {detail}")]
    NumericFailure {
        support: IndexSet,
        iteration: usize,
        detail: String,
    },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unsupported model format version {0}")]
    UnsupportedFormat(u64),

    #[error("corrupt model at byte {offset}: {message}")]
    CorruptModel { offset: usize, message: String },

    #[error("malformed input in {file}: {message}")]
    Parse { file: String, message: String },

    #[error("I/O error on {path}: {source}")]
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

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// Configuration error at the dotted field `path`.
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericFailure { .. } | Error::NonFiniteLoss { .. } => 3,
            Error::Io { .. } | Error::Csv(_) => 4,
            _ => 2,
        }
    }
}
