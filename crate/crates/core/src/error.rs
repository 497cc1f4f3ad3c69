use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("state has (near) zero norm and cannot be normalized")]
    ZeroNorm,
    #[error("approximation invalid: {0}")]
    OutOfRange(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("root not bracketed: {0}")]
    NoRoot(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
