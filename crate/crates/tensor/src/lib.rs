//! A deliberately small reverse-mode automatic differentiation engine.
//!
//! The engine records operations on a [`Graph`] (an append-only tape) and
//! propagates gradients back from a scalar loss. Only the primitives needed by
//! a small MLP and a convolutional encoder-decoder are provided: matrix
//! multiply, bias/channel broadcast adds, 3x3 and 1x1 convolutions, nearest
//! up-sampling, 2x2 down-sampling, `tanh`, SiLU, group normalization and
//! channel concatenation.

mod adam;
mod checkpoint;
mod error;
mod gemm;
mod graph;
pub mod init;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, TensorEntry};
pub use error::TensorError;
pub use graph::{Graph, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
