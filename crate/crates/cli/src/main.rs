//! `pcmr`: dataset generation, feature dumps, training, evaluation,
//! ablations and the mapping simulation.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage or invalid setting,
//! 3 missing or unreadable input, 4 numeric failure (divergence).

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{List, Sweep};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<pcmr_core::Error> for CliError {
    fn from(e: pcmr_core::Error) -> Self {
        use pcmr_core::Error as E;
        let code = match &e {
            E::InvalidArgument(_) => 2,
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
            E::Parse { .. } | E::Checkpoint(_) | E::Json(_) => 3,
            E::Diverged { .. } | E::NonFinite { .. } => 4,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pcmr", version, about = "Point-cloud registration misalignment regression")]
struct Cli {
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset of registered pairs.
    Gen(GenArgs),
    /// Dump per-anchor features of one pair as CSV.
    Features(FeaturesArgs),
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Radius or temperature ablation.
    Ablate(AblateArgs),
    /// Chained-registration mapping simulation with re-registration.
    Mapsim(MapsimArgs),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Points per scan.
    #[arg(long)]
    pub points: Option<usize>,
    /// Point density: uniform or range-falloff.
    #[arg(long)]
    pub density: Option<String>,
    /// Sensor range in metres.
    #[arg(long)]
    pub range: Option<f64>,
    /// Standard deviation of range noise in metres.
    #[arg(long)]
    pub range_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Initial-pose noise: noisy, none, or a scale factor applied to noisy.
    #[arg(long)]
    pub perturb: Option<String>,
    /// Shorthand for `--perturb noisy`.
    #[arg(long)]
    pub noisy: bool,
    /// Keep the perturbed initial pose instead of refining it with ICP.
    #[arg(long)]
    pub no_icp: bool,
    /// Target fraction of shared field of view between the two scans.
    #[arg(long)]
    pub overlap: Option<f64>,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Anchors per cloud.
    #[arg(long)]
    pub anchors: Option<usize>,
    /// Neighbourhood radii in metres, comma separated and decreasing.
    #[arg(long)]
    pub radii: Option<List<f64>>,
    /// Cap on points per neighbourhood passed to the Sinkhorn solver.
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Pair index in the manifest.
    #[arg(long)]
    pub pair: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub extract: ExtractArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Softmax temperature of the scale attention.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Scale fusion: attention or average.
    #[arg(long)]
    pub fusion: Option<String>,
    /// Indices of the radii fed to the model, comma separated.
    #[arg(long)]
    pub scales: Option<List<usize>>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Neighbours per anchor in the set encoder.
    #[arg(long)]
    pub encoder_k: Option<usize>,
    #[command(flatten)]
    pub extract: ExtractArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the checkpoint and training history.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// train, val or test.
    #[arg(long)]
    pub split: Option<String>,
    /// model (uses the checkpoint) or oracle (predicts the true label).
    #[arg(long)]
    pub predictor: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// radius or temperature.
    #[arg(long)]
    pub kind: Option<String>,
    /// Dataset directories, comma separated.
    #[arg(long)]
    pub data: Option<List<String>>,
    /// Training seeds averaged per row.
    #[arg(long)]
    pub seeds: Option<List<u64>>,
    /// Temperatures for the temperature ablation.
    #[arg(long)]
    pub taus: Option<List<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct MapsimArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// oracle, model or random.
    #[arg(long)]
    pub detector: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Re-register the top fraction of links by score.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Re-register links scoring above this value (metres).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Rate grid `start:stop:step`.
    #[arg(long)]
    pub sweep: Option<Sweep>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Distance between consecutive scans in metres.
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub perturb: Option<String>,
    #[command(flatten)]
    pub scene: SceneArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    stderrlog::new()
        .verbosity(1 + cli.verbose as usize)
        .init()
        .expect("logger initialises once");
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
