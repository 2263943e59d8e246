use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter set violates one of the system constraints. The message
    /// names the violated inequality.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument does not match the contract of the called operation
    /// (wrong bit count, mismatched lengths, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A received hard decision could not be mapped back to bits.
    #[error("decode failure: {0}")]
    Decode(String),

    /// A factorization or decomposition failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
