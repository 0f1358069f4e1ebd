//! Metrics, experiment orchestration and result export.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;

pub use error::{CliError, Result};
