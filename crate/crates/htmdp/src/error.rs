//! Crate-wide error type.
//!
//! Constructors validate their inputs and return [`Error`] instead of
//! panicking; hot inner loops rely on those validated invariants and use
//! debug assertions only.

/// Alias used by every fallible function in this crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape or indexing inconsistency between tables (kernel rows vs layout,
    /// policy rows vs action count, and so on).
    #[error("structural error: {0}")]
    Structure(String),

    /// A value outside the mathematical domain of an operation (negative
    /// occupancy, alpha outside (1,2], zero denominator at a visited pair).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid experiment configuration (budget overruns, unknown names,
    /// missing fields).
    #[error("config error: {0}")]
    Config(String),

    /// A request the library deliberately does not serve, stated explicitly
    /// rather than silently approximated.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed text input (instance files, result files).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
