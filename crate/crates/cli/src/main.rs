//! `camsplat` command-line tool.

mod commands;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "camsplat", version, about = "Camera-conditioned geometry pipelines")]
struct Cli {
    /// TOML run configuration. Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    PerAxis,
    Width,
}

/// Camera file plus the resolution its normalized intrinsics refer to.
#[derive(Debug, Args)]
struct CameraArgs {
    /// Re10K-style camera file.
    #[arg(long)]
    cameras: PathBuf,
    #[command(flatten)]
    resolution: ResolutionArgs,
}

#[derive(Debug, Args)]
struct ResolutionArgs {
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long, value_enum)]
    intrinsics_norm: Option<NormArg>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one Plücker ray map per frame.
    Rays(commands::rays::RaysArgs),
    /// Build epipolar attention masks for all frame pairs.
    EpiMask(commands::epi_mask::EpiMaskArgs),
    /// Recover metric scale from a sparse cloud and metric depth.
    Scale(commands::scale::ScaleArgs),
    /// Forward-warp a reference image along a trajectory.
    Warp(commands::warp::WarpArgs),
    /// Fit Gaussians to posed images.
    Fit(commands::fit::FitArgs),
    /// Train or sample the toy diffusion model.
    #[command(subcommand)]
    ToyDiffusion(commands::diffusion::ToyCommand),
    /// Image and pose metrics.
    Metrics(commands::metrics::MetricsArgs),
    /// Print the effective configuration as TOML.
    Config,
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("SC_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().map_err(|_| CliError::input(format!("SC_THREADS={value:?} is not a thread count")))?;
    if n == 0 {
        return Err(CliError::input("SC_THREADS must be positive"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Rays(a) => commands::rays::run(a, &mut cfg),
        Command::EpiMask(a) => commands::epi_mask::run(a, &mut cfg),
        Command::Scale(a) => commands::scale::run(a, &mut cfg),
        Command::Warp(a) => commands::warp::run(a, &mut cfg),
        Command::Fit(a) => commands::fit::run(a, &mut cfg),
        Command::ToyDiffusion(c) => commands::diffusion::run(c, &mut cfg),
        Command::Metrics(a) => commands::metrics::run(a, &mut cfg),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("camsplat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
