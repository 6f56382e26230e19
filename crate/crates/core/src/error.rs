use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed configuration literal: bad token `{token}` ({reason})")]
    Literal { token: String, reason: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("singular two-port solve at frequency index {index} ({frequency_hz} Hz)")]
    Singular { index: usize, frequency_hz: f64 },

    #[error("optimization diverged after {history_len} iterations")]
    Divergence { history_len: usize },

    #[error("integrity error in record {record}: {reason}")]
    Integrity { record: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Numerical failures (singular solves, divergence) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
