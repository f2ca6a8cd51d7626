use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use newton_scheme::basis::LibraryMode;

#[derive(Debug, Parser)]
#[command(name = "newton", version, about = "Identify force patterns in trajectories and predict future motion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a scenario into a trajectory CSV.
    Generate(GenerateArgs),
    /// Identify a model for every channel of a trajectory CSV.
    Fit(FitArgs),
    /// Evaluate a fitted model on a time grid.
    Predict(PredictArgs),
    /// Stream a trajectory through the lock/check/refit loop.
    Track(TrackArgs),
    /// Compare Full-library, polynomial-only and linear-extrapolation predictions.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LibraryArg {
    Full,
    Poly,
}

impl From<LibraryArg> for LibraryMode {
    fn from(l: LibraryArg) -> Self {
        match l {
            LibraryArg::Full => LibraryMode::Full,
            LibraryArg::Poly => LibraryMode::PolynomialOnly,
        }
    }
}

/// Scenario selection and parameters. Parameters not given fall back to the
/// scenario's defaults.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// free_fall, damped_pendulum, curve_ball, regime_switch, or a path to a
    /// scenario TOML file.
    #[arg(long)]
    pub scenario: String,
    /// Sample rate, Hz.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Length of the sampled interval, s.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Object mass, kg.
    #[arg(long)]
    pub mass: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub accel: Option<f64>,

    /// Oscillation amplitude.
    #[arg(long, allow_hyphen_values = true)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub v0xy: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Characteristic penetration length, m.
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub with_gravity: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub z0: Option<f64>,

    /// Switch time of the regime_switch scenario, s.
    #[arg(long)]
    pub switch_time: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Standard deviation of added Gaussian noise, channel units.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FitFlags {
    #[arg(long, value_enum, default_value_t = LibraryArg::Full)]
    pub library: LibraryArg,
    #[arg(long, default_value_t = 3)]
    pub max_terms: usize,
    /// Acceptance rmse relative to the channel data scale.
    #[arg(long, default_value_t = 1e-8)]
    pub rmse_accept: f64,
    /// Known measurement noise; raises the acceptance threshold to 1.25·sigma.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Model descriptor output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Fit only samples with t < t_first + window, s.
    #[arg(long)]
    pub window: Option<f64>,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Mass used for the force report, kg.
    #[arg(long)]
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model descriptor produced by `fit`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Last prediction time, s.
    #[arg(long, allow_hyphen_values = true)]
    pub to: f64,
    /// Grid rate, Hz; defaults to the scenario rate, else 100.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Event log output (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Fitting window, samples.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub check_eps: f64,
    #[arg(long, default_value_t = 3)]
    pub consecutive_k: usize,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Fitting window from the scenario start, s.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    /// Time at which the horizon error is measured, s.
    #[arg(long, default_value_t = 20.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 3)]
    pub max_terms: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub rmse_accept: f64,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Optional CSV copy of the table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
