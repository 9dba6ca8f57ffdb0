//! Error type shared by every subsystem.
//!
//! The four variants map onto the CLI exit codes: configuration and data
//! errors are user errors (1), `Internal` is an assertion failure (2), and
//! `Numerics` flags NaN/Inf escapes (3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad shapes, inconsistent flags, malformed config files.
    #[error("configuration error: {0}")]
    Config(String),
    /// Invalid input data: out-of-range labels, empty images, missing records.
    #[error("data error: {0}")]
    Data(String),
    /// Broken internal invariant.
    #[error("internal assertion: {0}")]
    Internal(String),
    /// Non-finite value escaped a numeric computation.
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
