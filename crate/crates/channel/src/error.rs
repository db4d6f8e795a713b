use thiserror::Error;
use uasim_core::CoreError;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

pub(crate) fn invalid(msg: impl Into<String>) -> ChannelError {
    ChannelError::InvalidInput(msg.into())
}
