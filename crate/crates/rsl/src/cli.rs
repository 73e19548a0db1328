use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "rsl",
    version,
    about = "Residual-network depth-limit experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for Monte Carlo and per-depth tasks.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one network, run it forward and backward.
    Simulate(Common),
    /// Strong-error ladder of discrete networks against their depth limit.
    Converge(Common),
    /// Scaling diagnostics over weight directories at distinct depths.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Weight directories; override `inputs` in the configuration.
        #[arg(value_name = "WEIGHTS")]
        inputs: Vec<PathBuf>,
    },
    /// SGD on the synthetic regression task.
    Train(Common),
    /// Backpropagation Jacobians against their depth limit.
    Backprop(Common),
    /// Write the synthetic dataset.
    Dataset(Common),
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => commands::simulate::run(&c),
        Command::Converge(c) => commands::converge::run(&c),
        Command::Diagnose { common, inputs } => commands::diagnose::run(&common, inputs),
        Command::Train(c) => commands::train::run(&c),
        Command::Backprop(c) => commands::backprop::run(&c),
        Command::Dataset(c) => commands::dataset::run(&c),
    }
}
