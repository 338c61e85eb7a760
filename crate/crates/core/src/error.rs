use alloc::string::String;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An observation carries a NaN or infinite coordinate.
    #[error("observation {index}: coordinate {coord} is not finite")]
    NonFinite { index: usize, coord: usize },
    /// Observations of differing dimension were mixed.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The input cannot support the requested computation (e.g. Silverman's
    /// rule on fewer than two distinct points).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Arguments are individually valid but inconsistent with each other.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}

macro_rules! contract {
    ($($arg:tt)*) => {
        $crate::error::Error::Contract(alloc::format!($($arg)*))
    };
}

pub(crate) use contract;
pub(crate) use invalid;
