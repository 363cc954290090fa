use thiserror::Error;

/// Errors produced anywhere in the estimator stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes or argument values violate an operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration cannot produce a valid experiment.
    #[error("configuration error: {0}")]
    Config(String),

    /// An estimator could not produce an estimate from its inputs.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Training or a numerical routine produced non-finite or divergent values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed file contents.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
