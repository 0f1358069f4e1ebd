//! Diffusion-initialized variational quantum eigensolvers.

pub mod bp;
pub mod conditioning;
pub mod dataset;
pub mod diffusion;
mod error;
pub mod pauli;
pub mod seed;
pub mod simulator;
pub mod vqe;

pub use error::{CoreError, Result};
