//! Crate-wide error type.
//!
//! Library operations that can fail on caller input return [`Result`]. Shape
//! mismatches inside the network toolkit are treated as programmer errors and
//! panic instead; see the `nn` module docs.

use thiserror::Error;

/// Errors produced by configuration loading, sampling, and simulation ops.
#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or experiment description failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// An operation was called with an argument outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two containers that must agree in length or shape did not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Underlying file I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON encoding or decoding failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
