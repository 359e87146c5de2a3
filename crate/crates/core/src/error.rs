//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad hyperparameter, dimension mismatch at setup).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (out-of-range label, negative loss, empty snapshot).
    #[error("input error: {0}")]
    Input(String),

    /// Malformed external data (IDX files).
    #[error("format error in {path} at byte {offset}: {detail}")]
    Format {
        path: String,
        offset: usize,
        detail: String,
    },

    /// Numeric failure during training (NaN/Inf in losses or gradients).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Internal invariant violation (shape mismatch between cached tensors).
    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
