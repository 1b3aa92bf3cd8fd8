//! `rgbt-sod`: synthetic data, training, evaluation and reporting.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 usage error,
//! 3 data error, 4 configuration or checkpoint error, 5 completed with
//! skipped (unpaired) images.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rgbt_core::CoreError;
use rgbt_metrics::MetricError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
pub const EXIT_PARTIAL: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "rgbt-sod", version, about = "RGB-thermal salient object detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic RGB-T dataset with train and test splits.
    Synth(SynthArgs),
    /// Train a model; writes checkpoints, loss.csv and manifest.json into --out.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset, or score existing prediction maps.
    Eval(EvalArgs),
    /// Compare the report.json of several run directories in one CSV.
    Report(ReportArgs),
    /// Train and score the four ablation configurations for several seeds.
    Ablate(AblateArgs),
    /// Train the full model once per α value.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n_samples: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Fraction of RGB images with additive noise.
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    /// Fraction of RGB images darkened to simulate night.
    #[arg(long, default_value_t = 0.5)]
    darkness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of ellipse,rectangle,blob.
    #[arg(long, default_value = "ellipse,rectangle,blob")]
    shapes: String,
}

/// Configuration sources, applied in order: defaults, --config file,
/// RGBT_<KEY> environment variables, --set pairs.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// key=value file with TrainConfig field names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// joint, partial_sequential or full_sequential.
    #[arg(long)]
    strategy: Option<String>,
    /// Training directory with RGB/, T/ and GT/.
    #[arg(long)]
    data: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint to evaluate (requires --data).
    #[arg(long, conflicts_with_all = ["pred", "gt"], requires = "data")]
    ckpt: Option<PathBuf>,
    /// Dataset directory with RGB/, T/ and GT/.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Warp every thermal image with transforms drawn from this seed.
    #[arg(long)]
    misalign: Option<u64>,
    /// Refuse checkpoints whose model does not match this config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of prediction maps (requires --gt).
    #[arg(long, requires = "gt")]
    pred: Option<PathBuf>,
    /// Directory of ground-truth masks.
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    /// Output directory (checkpoint mode) or report JSON path (map mode).
    #[arg(long)]
    out: PathBuf,
    /// Also write the PR curve as CSV (map mode).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories containing report.json, or report JSON files.
    runs: Vec<PathBuf>,
    /// Comparison CSV; PR-curve files are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated training seeds.
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated α values.
    #[arg(long, default_value = "5,10,15")]
    alphas: String,
}

/// Successful outcomes; `Partial` maps to exit code 5.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Partial(String),
}

pub fn exit_code(err: &CoreError) -> u8 {
    match err {
        CoreError::Usage(_) => EXIT_USAGE,
        CoreError::Data(_) | CoreError::Input(_) | CoreError::Image { .. } => EXIT_DATA,
        CoreError::Metric(MetricError::Io(_)) => EXIT_FAILURE,
        CoreError::Metric(_) => EXIT_DATA,
        CoreError::Config(_) | CoreError::Checkpoint(_) => EXIT_CONFIG,
        CoreError::Io(_) | CoreError::Json(_) | CoreError::Csv(_) => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::from(EXIT_OK),
        Ok(Outcome::Partial(msg)) => {
            log::warn!("{msg}");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
