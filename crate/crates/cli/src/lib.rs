//! Command-line driver: forward scans, simulated tomography, reconstruction
//! and bandwidth fitting, all from one JSON run configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod units;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "polsq",
    version,
    about = "Two-photon tomography of polarization-squeezed light"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Theory tables: density matrix versus delay, and the flux surface for
    /// flux-grid scans.
    Forward(Common),
    /// Poisson coincidence counts for every bin and outcome.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write expected counts instead of Poisson draws.
        #[arg(long)]
        noiseless: bool,
    },
    /// Maximum-likelihood fit per bin, with bootstrap uncertainty.
    Reconstruct(FitArgs),
    /// As `reconstruct`, also writing every bootstrap concurrence.
    Bootstrap(FitArgs),
    /// Cavity bandwidth from the pair-rate crossover delay.
    FitGamma(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: fig1b, fig1c, fig1d, null or surface.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Counts file; defaults to `counts.jsonl` in the output directory.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Bootstrap resamples per bin; 0 for the point fit only.
    #[arg(long, default_value_t = 100)]
    pub resamples: usize,
}

impl Common {
    /// The preset or config file, with command-line overrides applied.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => RunConfig::load(path)?,
            (None, Some(name)) => presets::preset(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown preset {name:?}; choose one of {}",
                    presets::PRESETS.join(", ")
                ))
            })?,
            _ => return Err(CliError::Config("give exactly one of --config and --preset".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    match &cli.command {
        Command::Forward(c) => commands::forward(&Run::new(c.resolve()?)),
        Command::Simulate { common, noiseless } => {
            Ok(vec![commands::simulate(&Run::new(common.resolve()?), *noiseless)?])
        }
        Command::Reconstruct(a) | Command::Bootstrap(a) => {
            let run = Run::new(a.common.resolve()?);
            let counts = a
                .counts
                .clone()
                .unwrap_or_else(|| run.cfg.output_dir.join(commands::COUNTS));
            let keep = matches!(cli.command, Command::Bootstrap(_));
            commands::reconstruct(&run, &counts, a.resamples, keep)
        }
        Command::FitGamma(c) => Ok(vec![commands::fit_gamma_cmd(&Run::new(c.resolve()?))?.0]),
    }
}
