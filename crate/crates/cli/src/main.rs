//! `drbayes`: config-driven pipelines for robust Bayesian simulation-based
//! inference with density ratio classes. Subcommands cover dataset
//! simulation, flow training with calibration reports, posterior bound
//! curves, the conflict checks, and the closed-form normal example.

mod config;
mod pipeline;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::pipeline::Pipeline;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or missing referenced files (exit code 2).
    Config(String),
    /// Runtime/compute failure (exit code 1).
    Compute(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn compute(e: impl std::fmt::Display) -> Self {
        CliError::Compute(e.to_string())
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Compute(_) => "compute",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Compute(m) => m.clone(),
            CliError::Io(e) => e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[derive(Parser)]
#[command(
    name = "drbayes",
    version,
    about = "Robust Bayesian simulation-based inference with density ratio classes"
)]
struct Cli {
    /// Worker threads (1 guarantees byte-identical reruns).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory override (otherwise experiment.output_dir,
    /// resolved against $DRBAYES_OUT when relative).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the training datasets for both bound priors.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the four flows on the simulated datasets; writes checkpoints,
    /// loss traces, and calibration reports.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Marginal posterior bound curves and the class-size estimate at the
    /// observed data.
    PosteriorBounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        observed: Option<PathBuf>,
    },
    /// Prior-data / summary conflict checks.
    Conflict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        observed: Option<PathBuf>,
        /// em-lower | em-upper | class | split-class | split-bound-lower |
        /// split-bound-upper | all
        #[arg(long)]
        check: String,
    },
    /// Closed-form calibration curves for the two-source normal example.
    NormalAnalytic {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulation-based calibration of trained posterior flows.
    Sbc {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::compute)?;
    }
    let (config_path, action): (&PathBuf, Box<dyn FnOnce(&mut Pipeline) -> Result<(), CliError>>) =
        match &cli.command {
            Command::Simulate { config } => (config, Box::new(|p| p.cmd_simulate())),
            Command::Train { config } => (config, Box::new(|p| p.cmd_train())),
            Command::PosteriorBounds { config, observed } => {
                let observed = observed.clone();
                (
                    config,
                    Box::new(move |p| p.cmd_posterior_bounds(observed.as_deref())),
                )
            }
            Command::Conflict {
                config,
                observed,
                check,
            } => {
                let observed = observed.clone();
                let check = check.clone();
                (
                    config,
                    Box::new(move |p| p.cmd_conflict(observed.as_deref(), &check)),
                )
            }
            Command::NormalAnalytic { config } => (config, Box::new(|p| p.cmd_normal_analytic())),
            Command::Sbc { config } => (config, Box::new(|p| p.cmd_sbc())),
        };
    let cfg = ExperimentConfig::load(config_path)?;
    let mut pipeline = Pipeline::new(cfg, cli.out.clone())?;
    action(&mut pipeline)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": {
                    "kind": e.kind(),
                    "message": e.message(),
                }
            });
            eprintln!("{payload}");
            ExitCode::from(e.exit_code())
        }
    }
}
