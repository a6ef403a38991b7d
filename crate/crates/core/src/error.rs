use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum ApcError {
    /// Input file does not follow the declared layout.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Table contents violate an invariant (negative counts, zero exposure, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A function was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The linear predictor or density became non-finite.
    #[error("evaluation error at cell (age {age}, period {period}): {message}")]
    Evaluation {
        age: usize,
        period: usize,
        message: String,
    },

    /// The log-density was not finite at the starting point of a chain.
    #[error("chain {chain} failed to start: {message}")]
    Start { chain: usize, message: String },

    /// Warmup could not produce a usable step size.
    #[error("adaptation failed in chain {chain}: {message}")]
    Adaptation { chain: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ApcError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ApcError::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        ApcError::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ApcError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = ApcError> = std::result::Result<T, E>;
