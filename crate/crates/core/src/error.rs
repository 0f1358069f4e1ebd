use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A Hamiltonian or grid description that cannot be built.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Tensor(#[from] dmvqe_tensor::TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn invalid_arg(msg: impl Into<String>) -> CoreError {
    CoreError::InvalidArgument(msg.into())
}

pub(crate) fn invalid_spec(msg: impl Into<String>) -> CoreError {
    CoreError::InvalidSpec(msg.into())
}
