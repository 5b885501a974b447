//! Command line front end: JSON configuration, the `steady`, `run`,
//! `ensemble` and `measure` subcommands, and CSV/JSON output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sep", version, about = "Stochastic Euler-Poisson laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve for the steady state and write its fields.
    Steady(Flags),
    /// Integrate one trajectory and write its diagnostics.
    Run(Flags),
    /// Run an ensemble and write moment series and decay fits.
    Ensemble(Flags),
    /// Time-average bounded observables along one long trajectory.
    Measure(Flags),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Flags {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `seed` and `noise.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn flags(&self) -> &Flags {
        match self {
            Self::Steady(f) | Self::Run(f) | Self::Ensemble(f) | Self::Measure(f) => f,
        }
    }
}

/// Loads the configuration, applies flag overrides and runs the subcommand.
pub fn run(command: &Command) -> Result<Vec<PathBuf>, CliError> {
    let flags = command.flags();
    let mut cfg = ExperimentConfig::load(&flags.config)?;
    if let Some(seed) = flags.seed {
        cfg.seed = Some(seed);
    }
    if let Some(w) = flags.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = &flags.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    match command {
        Command::Steady(_) => commands::cmd_steady(&cfg),
        Command::Run(_) => commands::cmd_run(&cfg),
        Command::Ensemble(_) => commands::cmd_ensemble(&cfg),
        Command::Measure(_) => commands::cmd_measure(&cfg),
    }
}
