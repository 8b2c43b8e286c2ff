use thiserror::Error;

/// Errors raised anywhere in the testing pipeline.
///
/// The variants are grouped by how a caller is expected to react: fix the
/// configuration, fix the data, or accept that the input is numerically
/// degenerate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error at index {index}: {message}")]
    Domain { index: usize, message: String },

    #[error("degenerate matrix: {0}")]
    Degenerate(String),

    #[error("replica {replica}: {source}")]
    Replica {
        replica: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Innermost error, looking through replica wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Replica { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
