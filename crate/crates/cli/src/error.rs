use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint not found: {}", .0.display())]
    MissingCheckpoint(PathBuf),

    #[error("{0}")]
    Run(String),
}

impl CliError {
    /// Process exit status: 3 for configuration problems, 4 for a missing
    /// checkpoint, 1 for anything that fails while running. Usage errors
    /// (unknown command or flag) exit with 2 before a command starts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::MissingCheckpoint(_) => 4,
            CliError::Run(_) => 1,
        }
    }
}

macro_rules! run_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Run(e.to_string())
            }
        })*
    };
}

run_error!(
    std::io::Error,
    serde_json::Error,
    uasim_core::CoreError,
    uasim_channel::ChannelError,
    uasim_models::ModelError,
    uasim_eval::EvalError
);

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
