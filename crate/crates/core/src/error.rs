use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs outside an operation's domain (shape mismatch, empty matrix, bad parameter).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's precondition in a way that cannot be repaired.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value appeared during fixed-point iteration.
    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    /// A checked mathematical invariant failed (e.g. a Jacobian determinant sign).
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
