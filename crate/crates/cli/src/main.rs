mod commands;
mod config;
mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tactile_core::estimator::Mode;
use tactile_core::Execution;

use crate::config::ExperimentConfig;

/// Force estimation, deadband coding and delay-bound relaxation experiments.
/// Every subcommand writes CSV files into the output directory.
#[derive(Parser, Debug)]
#[command(name = "tactile", version, about)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files; overrides the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Run on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rollout MSE against horizon for both models and both baselines.
    Estimate(EstimateArgs),
    /// One simulator run with per-user dropout.
    Simulate(SimulateArgs),
    /// Capacity against the relaxed delay bound.
    Capacity(CapacityArgs),
    /// Closed-form M/M/1 delay-violation probability.
    Analytic(AnalyticArgs),
    /// Deadband packet reduction for a list of JND constants.
    Deadband(DeadbandArgs),
    /// Monte-Carlo M/M/1 against the closed form.
    Mm1(Mm1Args),
    /// Write a synthetic haptic trace.
    SynthTrace(SynthTraceArgs),
    /// Write a synthetic per-user spectral-efficiency profile.
    SynthChannel(SynthChannelArgs),
    /// Write randomly initialised (untrained) estimator weights.
    InitWeights(InitWeightsArgs),
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub mm_weights: Option<PathBuf>,
    #[arg(long)]
    pub fo_weights: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Longest horizon, in sampling periods.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Error threshold, newtons.
    #[arg(long)]
    pub eps_th: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub tw_ms: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CapacityArgs {
    /// Relaxed delay bounds to sweep, milliseconds.
    #[arg(long, value_delimiter = ',')]
    pub tw_ms: Option<Vec<f64>>,
    #[arg(long)]
    pub users_min: Option<usize>,
    #[arg(long)]
    pub users_max: Option<usize>,
    #[arg(long)]
    pub satisfied_frac: Option<f64>,
}

#[derive(Args, Debug)]
pub struct AnalyticArgs {
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub dmax_ms: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct DeadbandArgs {
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    #[arg(long)]
    pub floor_eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct Mm1Args {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub dmax_ms: Option<Vec<f64>>,
    #[arg(long)]
    pub packets: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SynthTraceArgs {
    #[arg(long, value_enum)]
    pub activity: Option<ActivityArg>,
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SynthChannelArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub duration_s: Option<f64>,
}

#[derive(Args, Debug)]
pub struct InitWeightsArgs {
    #[arg(long, value_enum, default_value = "multi-modal")]
    pub mode: ModeArg,
    #[arg(long)]
    pub norm_trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActivityArg {
    SinusoidalPush,
    PulseTrainTap,
    RampHoldPress,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    MultiModal,
    ForceOnly,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::MultiModal => Mode::MultiModal,
            ModeArg::ForceOnly => Mode::ForceOnly,
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut cfg = ExperimentConfig::load(cli.common.config.as_deref())?;
    cfg.apply_common(cli.common.seed, cli.common.out_dir.clone());
    let exec = if cli.common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let written = match cli.command {
        Command::Estimate(a) => commands::estimate(cfg, a, exec)?,
        Command::Simulate(a) => commands::simulate(cfg, a, exec)?,
        Command::Capacity(a) => commands::capacity(cfg, a, exec)?,
        Command::Analytic(a) => commands::analytic(cfg, a)?,
        Command::Deadband(a) => commands::deadband(cfg, a)?,
        Command::Mm1(a) => commands::mm1(cfg, a, exec)?,
        Command::SynthTrace(a) => commands::synth_trace(cfg, a)?,
        Command::SynthChannel(a) => commands::synth_channel(cfg, a, exec)?,
        Command::InitWeights(a) => commands::init_weights(cfg, a)?,
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}
