//! Command-line front end.
//!
//! Every subcommand reads one [`RunConfig`] (defaults when `--config` is
//! absent), writes a table to `--out` or stdout and, for file output, a
//! `<out>.config.json` snapshot of the resolved configuration.

mod commands;
pub mod config;
pub mod output;
mod signals;

pub use config::{OutputFormat, RunConfig};
pub use signals::{read_signal_matrix, write_signal_matrix};

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use crate::error::{GyroError, Result};

#[derive(Debug, Parser)]
#[command(name = "nvgyro", version, about = "Nuclear-spin gyroscope simulator")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aligned-axis Ramsey fringe.
    Ramsey,
    /// Aligned-axis echo fringe.
    Echo,
    /// Signal matrix of the four NV families for the configured rotation.
    Families,
    /// Fit the rotation vector to a signal matrix.
    Estimate {
        /// Signal matrix file (overrides `estimate.signals`).
        #[arg(long)]
        signals: Option<PathBuf>,
    },
    /// Sensitivity budget and sensitivity versus density.
    Sensitivity,
    /// Ramsey and echo coherence of the ¹⁴N in an electron-spin bath.
    Bath,
    /// Nuclear polarization transfer.
    Polarize,
}

/// Exit code for a fit that hit its iteration limit.
pub const EXIT_NO_CONVERGENCE: u8 = 4;

/// Runs one invocation and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| GyroError::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Command::Estimate { signals: Some(p) } = &cli.command {
        cfg.estimate.signals = Some(p.clone());
    }
    let cfg = cfg.resolve()?;
    commands::dispatch(&cli.command, &cfg, cli.out.as_deref())
}
