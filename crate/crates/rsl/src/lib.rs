//! Experiment runner for residual-network depth limits: configuration,
//! weight-file formats, a worker pool and the subcommands of the `rsl` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pool;

pub use error::{CliError, CliResult};
