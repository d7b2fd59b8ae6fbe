//! Command-line driver: config loading, subcommands, CSV outputs and run manifests.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::Config;
pub use output::{Csv, FileEntry, Outputs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] catmmv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for bad inputs, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Model(e) if e.is_validation() => 1,
            CliError::Model(_) | CliError::Failed(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Jump,
    Diffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Optimal,
    Precommitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryKind {
    Optimal,
    None,
}

#[derive(Debug, Parser)]
#[command(name = "catmmv", version, about = "Monotone mean-variance reinsurance under shot-noise catastrophe risk")]
pub struct Cli {
    /// JSON parameter file; the reference parameters when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "jump")]
    pub model: ModelKind,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Coefficient tabulation density.
    #[arg(long, global = true, default_value_t = 2001)]
    pub grid: usize,
    /// Worker threads for Monte Carlo (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the value-function coefficients.
    Coeffs,
    /// Print the optimal objective and tabulate the value function.
    Value(GridArgs),
    /// Tabulate the optimal controls.
    Policy(GridArgs),
    /// Monte Carlo ensemble under the chosen strategies.
    Simulate(SimArgs),
    /// Efficient-frontier constants and moments.
    Frontier(FrontierArgs),
    /// Residual checks of the coefficient equations and the HJBI equation.
    Verify(VerifyArgs),
    /// Controls over a wealth range while one parameter varies.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 25.0, 50.0, 75.0])]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 50.0, 100.0, 150.0, 200.0])]
    pub x: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 5.0])]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Overridden by `CATMMV_SEED`.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Brownian sub-steps per step (a power of two).
    #[arg(long, default_value_t = 1)]
    pub substeps: usize,
    #[arg(long)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub mc: McArgs,
    /// Record times; the horizon when omitted.
    #[arg(long, value_delimiter = ',')]
    pub record: Vec<f64>,
    #[arg(long, value_enum, default_value = "optimal")]
    pub strategy: StrategyKind,
    #[arg(long, value_enum, default_value = "optimal")]
    pub adversary: AdversaryKind,
}

#[derive(Debug, Clone, Args)]
pub struct FrontierArgs {
    /// Evaluation times; quarters of the horizon when omitted.
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    /// Append Monte Carlo columns.
    #[arg(long)]
    pub mc: bool,
    #[command(flatten)]
    pub sim: McArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Random one-sided control draws per grid point.
    #[arg(long, default_value_t = 4)]
    pub random: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    /// Dotted parameter name, e.g. `catastrophe.rho`.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 5.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub x_min: f64,
    #[arg(long, default_value_t = 100.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 21)]
    pub x_points: usize,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Coeffs => "coeffs",
            Command::Value(_) => "value",
            Command::Policy(_) => "policy",
            Command::Simulate(_) => "simulate",
            Command::Frontier(_) => "frontier",
            Command::Verify(_) => "verify",
            Command::Sensitivity(_) => "sensitivity",
        }
    }
}

/// Files and console text of one command, before anything touches the disk.
#[derive(Debug, Default)]
pub struct Report {
    pub outputs: Outputs,
    pub messages: Vec<String>,
    pub seed: Option<u64>,
    /// Set when the command ran but a check it performs did not pass.
    pub failure: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub model: ModelKind,
    pub seed: Option<u64>,
    pub grid: usize,
    pub threads: Option<usize>,
    pub config: Config,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<FileEntry>,
}

/// `CATMMV_SEED` when set, otherwise `flag`.
pub fn resolve_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("CATMMV_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Usage(format!("CATMMV_SEED='{s}' is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

pub fn load_config(cli: &Cli) -> Result<Config, CliError> {
    match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            Config::from_json(&text)
        }
        None => Ok(Config::default()),
    }
}

/// Console text of a finished run; `failure` is set when a check did not pass.
#[derive(Debug)]
pub struct Outcome {
    pub messages: Vec<String>,
    pub failure: Option<String>,
}

/// Run the command, then write its outputs and manifest.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let config = load_config(cli)?;
    let report = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| commands::run(cli, &config))?,
        None => commands::run(cli, &config)?,
    };
    let mut written = report.outputs.commit(&cli.out)?;
    let manifest = RunManifest {
        tool: "catmmv",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        model: cli.model,
        seed: report.seed,
        grid: cli.grid,
        threads: cli.threads,
        config,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: report.outputs.entries(),
    };
    let mut m = Outputs::default();
    m.add("manifest.json", serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n");
    written.extend(m.commit(&cli.out)?);
    let mut messages = report.messages;
    messages.extend(written.iter().map(|p| format!("wrote {}", p.display())));
    Ok(Outcome { messages, failure: report.failure })
}
