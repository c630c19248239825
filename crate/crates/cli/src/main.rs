mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riskcurve::Parameterization;

/// Predictiveness curves for competing-risks prediction models.
#[derive(Parser, Debug)]
#[command(name = "riskcurve", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate R(v) and its inverse with perturbation confidence intervals.
    Estimate(EstimateArgs),
    /// Run a simulation study and tabulate Bias, ESE, ASE and CP.
    Simulate(SimulateArgs),
    /// Tabulate the true curve of a simulation setting.
    TrueCurve(TrueCurveArgs),
    /// Re-run a manifest and check that the outputs are byte-identical.
    Replay(ReplayArgs),
}

/// Model and inference options. Unset flags fall back to `--config`, then to
/// the built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// TOML file whose keys are configuration field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Prediction horizon.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_parser = ["glm", "rcs"])]
    pub param: Option<String>,
    /// Number of spline knots.
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..=5))]
    pub knots: Option<u64>,
    /// Lower end of the v grid.
    #[arg(long)]
    pub nu0: Option<f64>,
    /// Upper end of the v grid.
    #[arg(long)]
    pub nu1: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub cv_repeats: Option<usize>,
    /// Number of perturbation replicates.
    #[arg(long = "E")]
    pub e: Option<usize>,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Worker threads (0 = all cores). Outputs do not depend on this.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    /// CSV with columns time, status, then one column per covariate.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Simulation setting, 1 or 2.
    #[arg(long)]
    pub setting: String,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    /// `rv` for the curve, `rinv` for its inverse.
    #[arg(long, default_value = "rv", value_parser = ["rv", "rinv"])]
    pub metric: String,
    /// Comma-separated evaluation points (v for rv, p for rinv).
    #[arg(long, value_delimiter = ',')]
    pub points: Option<Vec<f64>>,
    /// Size of each Monte-Carlo dataset for the setting-2 truth.
    #[arg(long)]
    pub mc_size: Option<usize>,
    /// Monte-Carlo rounds averaged for the setting-2 truth.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TrueCurveArgs {
    /// Simulation setting, 1 or 2.
    #[arg(long)]
    pub setting: String,
    #[arg(long, default_value_t = 4.0)]
    pub tau: f64,
    #[arg(long)]
    pub mc_size: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Seed of the Monte-Carlo truth.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    pub nu0: f64,
    #[arg(long, default_value_t = 0.95)]
    pub nu1: f64,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where the replayed outputs go.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

impl ModelArgs {
    pub fn parameterization(&self) -> Option<Parameterization> {
        self.param.as_deref().map(|p| p.parse().expect("clap restricts the values"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
