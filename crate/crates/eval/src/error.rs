use thiserror::Error;
use uasim_core::CoreError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("measurement window of {duration} s is too short; at least {required} s is needed")]
    TooShort { duration: f64, required: f64 },

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub(crate) fn invalid(msg: impl Into<String>) -> EvalError {
    EvalError::InvalidInput(msg.into())
}
