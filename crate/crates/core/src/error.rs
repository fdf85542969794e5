use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller broke a documented precondition (shape, range, index).
    Contract(String),
    /// A forward match had no target instances to distribute weight over.
    EmptyTargets,
    /// A NaN or infinity appeared where only finite values are allowed.
    NonFinite(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn non_finite(msg: impl Into<String>) -> Self {
        Error::NonFinite(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::EmptyTargets => f.write_str("forward match has no target instances"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
