//! Command-line experiment runner.
//!
//! Every command except `distance` reads an [`ExperimentConfig`] from
//! `--config`, writes its files under the output directory and prints a JSON
//! summary on stdout. Exit status: 0 success, 1 a sweep missed its slope
//! threshold, 2 the balancing flow stopped before converging, 64 bad usage or
//! configuration, 65 malformed input data, 70 numerical failure, 74 I/O error.

mod commands;
mod config;

pub use commands::*;
pub use config::{ExperimentConfig, FileFormat, GridSpec, InitialSpec, OutputFormat, OutputSpec, MAX_AMPLITUDE};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "balflow", version, about = "Balancing flow and Donaldson heat flow experiments on the Riemann sphere")]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for k-sweeps.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed of the perturbed initial metric; overrides the config.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalized balancing flow until balanced or `t_max`.
    Balance,
    /// Heat flow (modified or Donaldson) on the grid.
    Heatflow,
    /// Balancing flow against the heat flow at time `t` over `k_sweep`.
    Bflow,
    /// Iterates of `Phi_k` against the heat flow at time `t` over `k_sweep`.
    Iterate,
    /// Second-order remainder of the Bergman expansion over `k_sweep`.
    Ctyz,
    /// Distance of `Q_k` from the identity over `k_sweep`.
    Qk,
    /// Gap between heat-flow and balancing-flow tangents over `k_sweep`.
    TangentGap,
    /// Distance `d_k` between two stored inner products.
    Distance {
        a: PathBuf,
        b: PathBuf,
        /// Defaults to the value in the inputs' JSON sidecars.
        #[arg(long)]
        k: Option<u32>,
    },
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    Ok((cfg, out))
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    if let Command::Distance { a, b, k } = &cli.command {
        return distance(a, b, *k);
    }
    let (cfg, out) = load(cli)?;
    match cli.command {
        Command::Balance => balance(&cfg, &out),
        Command::Heatflow => heatflow(&cfg, &out),
        Command::Bflow => bflow(&cfg, &out),
        Command::Iterate => iterate(&cfg, &out),
        Command::Ctyz => ctyz(&cfg, &out),
        Command::Qk => qk(&cfg, &out),
        Command::TangentGap => tangent_gap_cmd(&cfg, &out),
        Command::Distance { .. } => unreachable!(),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("balflow: --threads must be positive");
            return EXIT_USAGE;
        }
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            outcome.code
        }
        Err(e) => {
            eprintln!("balflow: {e}");
            exit_code(&e)
        }
    }
}
