//! `orca` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orca_core::error::OrcaError;

#[derive(Parser)]
#[command(
    name = "orca",
    about = "Joint CTR / dwell-time models with causal decoupling: synthetic data, training, evaluation, ablations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file (or a run manifest from a previous run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, e.g. --set scm.clickbait_fraction=0.3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed override (generate: scm.seed; train/ablate: train.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Ablation variant override: base | fci | scd | full.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic impression dataset with a planted clickbait
    /// shortcut.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output dataset directory.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train one model and write checkpoint, history, and run manifest.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory (dataset.csv + schema.json).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split and print the metric report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train | val | test
        #[arg(long, default_value = "test")]
        split: String,
        /// Optional file to also write the JSON report to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heatmaps, moderate-mass recovery, bias curve, leave-one-feature-out.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
        /// Second checkpoint whose bias slope is reported alongside.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Train all four variants across seeds and tabulate metrics + t-tests.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3, 4, 5])]
        seeds: Vec<u64>,
    },
}

fn build_config(args: &ConfigArgs, seed_target: &str) -> orca_core::Result<config::RunConfig> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("{seed_target}={seed}"));
    }
    if let Some(variant) = &args.variant {
        overrides.push(format!("train.variant={variant}"));
    }
    config::load_config(args.config.as_deref(), &overrides)
}

fn run() -> orca_core::Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { cfg, out } => {
            let cfg = build_config(&cfg, "scm.seed")?;
            commands::cmd_generate(&cfg, &out)?;
            Ok(0)
        }
        Command::Train { cfg, data, out } => {
            let cfg = build_config(&cfg, "train.seed")?;
            let data_dir = commands::resolve_data_dir(data.as_ref(), &cfg)?;
            let result = commands::cmd_train(&cfg, &data_dir, &out)?;
            Ok(if result.diverged { 4 } else { 0 })
        }
        Command::Eval { checkpoint, data, split, out } => {
            let split: commands::SplitChoice = split.parse()?;
            commands::cmd_eval(&checkpoint, &data, &split, out.as_deref())?;
            Ok(0)
        }
        Command::Analyze { cfg, checkpoint, data, split, out, compare } => {
            let cfg = build_config(&cfg, "train.seed")?;
            let split: commands::SplitChoice = split.parse()?;
            commands::cmd_analyze(&cfg, &checkpoint, &data, &split, &out, compare.as_deref())?;
            Ok(0)
        }
        Command::Ablate { cfg, data, out, seeds } => {
            let cfg = build_config(&cfg, "train.seed")?;
            let data_dir = commands::resolve_data_dir(data.as_ref(), &cfg)?;
            commands::cmd_ablate(&cfg, &data_dir, &out, &seeds)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                OrcaError::Config(_) => 2,
                OrcaError::Divergence(_) => 4,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}
