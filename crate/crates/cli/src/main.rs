//! `tme`: experiment runner for truncated M-estimator training.

// `!(x > 0.0)`-style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Parser)]
#[command(name = "tme", about = "Robust training under label noise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed (overrides train.seed and the noise seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Single training run; writes per-epoch metrics CSV and a JSON summary.
    Train(CommonArgs),
    /// Switching-period sweep over sweep.r_values x sweep.seeds.
    SweepR(CommonArgs),
    /// Threshold-disturbance sweep comparing the scheduled and
    /// truncated-only variants.
    PerturbSigma(CommonArgs),
    /// Loss histogram split by clean/mislabeled at a chosen epoch.
    Hist {
        #[command(flatten)]
        common: CommonArgs,
        /// Epoch to histogram (overrides hist.epoch).
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Exact noise-tolerance enumeration on the bundled finite task.
    LemmaCheck(CommonArgs),
    /// Empirical transition matrix of the configured noise model.
    NoiseStats(CommonArgs),
}

fn dispatch(command: &Command) -> Result<()> {
    let (common, epoch) = match command {
        Command::Train(c)
        | Command::SweepR(c)
        | Command::PerturbSigma(c)
        | Command::LemmaCheck(c)
        | Command::NoiseStats(c) => (c, None),
        Command::Hist { common, epoch } => (common, *epoch),
    };
    let config = RunConfig::load(&common.config)?;
    let out_dir = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    match command {
        Command::Train(_) => runner::cmd_train(&config, common.seed, &out_dir),
        Command::SweepR(_) => runner::cmd_sweep_r(&config, common.seed, &out_dir),
        Command::PerturbSigma(_) => runner::cmd_perturb_sigma(&config, common.seed, &out_dir),
        Command::Hist { .. } => runner::cmd_hist(&config, common.seed, &out_dir, epoch),
        Command::LemmaCheck(_) => runner::cmd_lemma_check(&config, common.seed, &out_dir),
        Command::NoiseStats(_) => runner::cmd_noise_stats(&config, common.seed, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
