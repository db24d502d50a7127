use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use varme_cli::commands::{cmd_fit, cmd_oracle, cmd_power, cmd_simulate, cmd_test, Overrides};
use varme_cli::config::EstimatorChoice;
use varme_cli::{CliError, RunConfig};

/// VAR estimation and Granger-causality testing for series observed with measurement error.
#[derive(Parser)]
#[command(name = "varme", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo replications.
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorChoice>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coefficient table and residual QQ data.
    Fit,
    /// Granger edge table and configured contrasts.
    Test,
    /// Rejection-rate and bias/MSE tables.
    Simulate,
    /// Corrected power curves.
    Power,
    /// Checks the closed-form covariance against simulation.
    Oracle,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("VARME_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Config(format!("VARME_THREADS = '{v}' is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Overrides {
        seed: cli.seed,
        out: cli.out,
        reps: cli.reps,
        estimator: cli.estimator,
    }
    .apply(&mut cfg);
    match cli.command {
        Command::Fit => cmd_fit(&cfg),
        Command::Test => cmd_test(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Power => cmd_power(&cfg),
        Command::Oracle => cmd_oracle(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
