use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "polcap",
    version,
    about = "Capacity of the polarization-modulated single-photon binomial channel",
    args_override_self = true
)]
pub struct Cli {
    /// Key-value file of default flags (`key = value` per line, `#` comments).
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity and optimal input distribution for one (N, noise) pair.
    Capacity(CapacityArgs),
    /// Capacity and reference bounds against N for an aligned detector.
    SweepN(SweepNArgs),
    /// Capacity against the maximum detector angle `a` for uniform noise.
    SweepA(SweepAArgs),
    /// Asymptotic capacity and the mixture / dual bounds.
    Bounds(BoundsArgs),
    /// Monte Carlo photon counts at a fixed polarization angle.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseKind {
    Deterministic,
    Uniform,
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Redraw {
    PerPhoton,
    PerWindow,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    #[arg(long, value_enum, default_value = "deterministic")]
    pub noise: NoiseKind,
    /// Maximum detector angle for uniform noise.
    #[arg(long, default_value_t = 0.0)]
    pub a: f64,
    /// CSV density table `phi,density` for tabulated noise.
    #[arg(long, value_name = "PATH")]
    pub density: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub ba_tolerance: Option<f64>,
    #[arg(long)]
    pub kkt_tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub verification_points: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CapacityArgs {
    /// Photons per sample window.
    #[arg(long = "n", value_name = "N")]
    pub photons: u32,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Sample period in seconds; adds a bits-per-second figure.
    #[arg(long, value_name = "SECONDS")]
    pub sample_period: Option<f64>,
    /// Read angles in degrees instead of radians.
    #[arg(long)]
    pub degrees: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepNArgs {
    /// Photon numbers, e.g. `1,2,4` or `1-63`.
    #[arg(long, value_name = "LIST", default_value = "1-63")]
    pub n_list: String,
    #[arg(long, default_value_t = polcap::bounds::DEFAULT_QUAD_POINTS)]
    pub quad_points: usize,
    #[arg(long, default_value_t = polcap::bounds::DEFAULT_DUAL_GRID)]
    pub dual_grid: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_name = "SECONDS")]
    pub sample_period: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepAArgs {
    #[arg(long, value_name = "LIST", default_value = "1,3,7,15,31,63")]
    pub n_list: String,
    /// Explicit `a` values; overrides `--a-points`.
    #[arg(long, value_name = "LIST")]
    pub a_list: Option<String>,
    /// Evenly spaced `a` values on [0, π/2].
    #[arg(long, default_value_t = 65)]
    pub a_points: usize,
    #[arg(long)]
    pub degrees: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_name = "SECONDS")]
    pub sample_period: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long, value_name = "LIST", default_value = "1-63")]
    pub n_list: String,
    #[arg(long, default_value_t = polcap::bounds::DEFAULT_QUAD_POINTS)]
    pub quad_points: usize,
    #[arg(long, default_value_t = polcap::bounds::DEFAULT_DUAL_GRID)]
    pub dual_grid: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Polarization angle in [0, π/2].
    #[arg(long)]
    pub theta: f64,
    #[arg(long = "n", value_name = "N")]
    pub photons: u32,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "per-photon")]
    pub redraw: Redraw,
    #[arg(long)]
    pub degrees: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}
