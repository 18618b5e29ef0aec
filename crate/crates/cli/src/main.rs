//! `facedir` command-line tool: simulate scenes, run inference on recordings
//! and reproduce the evaluation studies.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! failures while running.

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{Pattern, Source, Tunables};

#[derive(Debug, Parser)]
#[command(name = "facedir", version, about = "Infer which device a speaker is facing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene config to per-microphone WAV files plus a truth sidecar
    Simulate(SimulateArgs),
    /// Decide which device the speaker faced from a recording directory
    Infer(InferArgs),
    /// Print per-device directions of arrival for a recording directory
    Aoa(AoaArgs),
    /// Run a Monte-Carlo facing benchmark and write per-trial CSV plus summary
    Eval(EvalArgs),
    /// First-tap convergence study of the channel estimator
    Converge(ConvergeArgs),
    /// Localize devices from pairwise directions of arrival
    P2p(P2pArgs),
}

#[derive(Debug, clap::Args, serde::Serialize)]
pub struct SimulateArgs {
    /// Scene TOML
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Override the scene's noise seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scene's reflection order (0..=3)
    #[arg(long)]
    pub reflection_order: Option<u32>,
    /// Override the target SNR~, dB
    #[arg(long)]
    pub snr: Option<f64>,
}

#[derive(Debug, clap::Args, serde::Serialize)]
pub struct InferArgs {
    /// Directory holding devNN_micMM.wav files
    #[arg(long)]
    pub obs: PathBuf,
    /// Device layout TOML (or a scene TOML); defaults to the scene in <obs>/truth.json
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Radiation pattern assumed for the speaker
    #[arg(long, value_enum, default_value_t = Pattern::Cardioid)]
    pub pattern: Pattern,
    /// Print the decision as JSON
    #[arg(long)]
    pub json: bool,
    /// Also write decision.json, decision.csv and a manifest here
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, clap::Args, serde::Serialize)]
pub struct AoaArgs {
    /// Directory holding devNN_micMM.wav files
    #[arg(long)]
    pub obs: PathBuf,
    /// Device layout TOML (or a scene TOML); defaults to the scene in <obs>/truth.json
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Print JSON
    #[arg(long)]
    pub json: bool,
    /// Sub-sample lag interpolation
    #[arg(long, value_enum, default_value_t = args::Interp::Sinc)]
    pub interpolation: args::Interp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 4 devices, order-2 reflections, SNR~ 30 dB
    Standard,
    /// The standard suite with 20 trials
    Smoke,
    /// 2, 4 and 6 devices
    Devices,
    /// SNR~ 30, 20, 10 and 5 dB
    Snr,
}

#[derive(Debug, clap::Args, serde::Serialize)]
pub struct EvalArgs {
    /// Suite TOML; overrides --preset
    #[arg(long)]
    pub suite: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Standard)]
    pub preset: Preset,
    /// Trials per grid cell
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Pattern assumed by inference; defaults to the simulated one
    #[arg(long, value_enum)]
    pub pattern: Option<Pattern>,
    #[arg(long)]
    pub reflection_order: Option<u32>,
    #[arg(long)]
    pub absorption: Option<f64>,
    /// Add a wall-clock runtime column (the CSV is then no longer reproducible)
    #[arg(long)]
    pub record_runtime: bool,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, clap::Args, serde::Serialize)]
pub struct ConvergeArgs {
    /// Scenes per (SNR, source) cell
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// SNR~ grid, dB
    #[arg(long, value_delimiter = ',', default_values_t = [30.0, 20.0, 10.0])]
    pub snr: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Source::Gaussian, Source::SpeechLike])]
    pub sources: Vec<Source>,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    #[arg(long, default_value_t = 4)]
    pub devices: usize,
    #[arg(long, default_value_t = 1)]
    pub reflection_order: u32,
    #[arg(long, default_value_t = 0.5)]
    pub absorption: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Squared,
    Absolute,
}

#[derive(Debug, clap::Args, serde::Serialize)]
pub struct P2pArgs {
    /// Scene TOML giving the true device poses
    #[arg(long)]
    pub config: PathBuf,
    /// Use exact pairwise directions instead of simulated chirps
    #[arg(long)]
    pub exact: bool,
    /// Gaussian noise added to every pairwise direction, degrees
    #[arg(long, default_value_t = 0.0)]
    pub sigma_deg: f64,
    /// Seed for the added noise and the random restarts
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Device whose pose is fixed
    #[arg(long, default_value_t = 0)]
    pub anchor: usize,
    /// Device whose distance to the anchor fixes the scale
    #[arg(long, default_value_t = 1)]
    pub scale_device: usize,
    /// Drop pairs whose reciprocal directions disagree by more than this, degrees
    #[arg(long, default_value_t = facedir::locate::DEFAULT_RELIABILITY_TOL.to_degrees())]
    pub tol_deg: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Squared)]
    pub loss: LossArg,
    /// Optimizer starts
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Chirp length, ms
    #[arg(long, default_value_t = 500.0)]
    pub chirp_ms: f64,
    /// Deconvolution regularization for the chirp channels
    #[arg(long, default_value_t = facedir::dsp::DEFAULT_REG)]
    pub reg: f64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Infer(a) => commands::infer(a),
        Command::Aoa(a) => commands::aoa(a),
        Command::Eval(a) => commands::eval(a),
        Command::Converge(a) => commands::converge(a),
        Command::P2p(a) => commands::p2p(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
