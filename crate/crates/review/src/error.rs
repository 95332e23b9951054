use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("{0} not found")]
    NotFound(String),

    #[error("record {id} is at version {current}, request expected {expected}")]
    Conflict { id: String, expected: u64, current: u64 },

    /// Well-formed request that the record cannot accept.
    #[error("{0}")]
    Invalid(String),

    /// Body that does not parse.
    #[error("{0}")]
    BadRequest(String),

    #[error("store at {path} is inconsistent: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Core(#[from] elseg_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ReviewError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReviewError::Io { path: path.into(), source }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        ReviewError::Corrupt {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Short machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ReviewError::NotFound(_) => "not_found",
            ReviewError::Conflict { .. } => "conflict",
            ReviewError::Invalid(_) => "invalid",
            ReviewError::BadRequest(_) => "bad_request",
            ReviewError::Core(e) if matches!(e.root(), elseg_core::Error::Validation { .. }) => "invalid",
            ReviewError::Core(_) | ReviewError::Internal(_) | ReviewError::Corrupt { .. } | ReviewError::Bind { .. } | ReviewError::Io { .. } => {
                "internal"
            }
        }
    }
}

pub type Result<T, E = ReviewError> = std::result::Result<T, E>;
