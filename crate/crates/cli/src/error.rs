use std::path::PathBuf;

use dmvqe_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments.
    #[error("validation error: {0}")]
    Validation(String),

    /// An input produced by an earlier stage is missing.
    #[error("missing staged artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Core(CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(CoreError::InvalidArgument(_) | CoreError::InvalidSpec(_) | CoreError::ResourceLimit(_)) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Core(CoreError::Parse { .. }) => 3,
            _ => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
