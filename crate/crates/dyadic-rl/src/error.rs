use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed us something that violates an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A numerical routine failed (e.g. a covariance stopped being positive definite).
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A file or record could not be parsed or failed validation.
    #[error("parse error: {0}")]
    Parse(String),
    /// The experiment configuration is inconsistent or unsupported.
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
