//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration key failed validation.
    #[error("config error: key `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Configuration file could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// A separated path had no usable energy, so its offset cannot be fit.
    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    /// NMSE is undefined because the ground truth carries no energy.
    #[error("zero-energy ground truth; NMSE undefined")]
    ZeroEnergyTruth,

    /// An estimator stage failed on this realization.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// I/O failure, annotated with the path involved.
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
