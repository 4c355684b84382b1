//! Batch front-end for the source imaging experiments: configuration,
//! simulation and fitting of grid cells, the benchmark grid and exports.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ExperimentConfig, MethodRun};
pub use error::CliError;
