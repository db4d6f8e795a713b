use thiserror::Error;
use uasim_core::CoreError;
use uasim_nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("checkpoint does not fit: {0}")]
    Architecture(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidInput(msg.into())
}
