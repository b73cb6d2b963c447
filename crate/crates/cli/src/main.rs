//! `kirchhoff`: configuration-driven runs of the Kirchhoff wave laboratory.
//!
//! Exit codes: 0 success, 1 property failure, 2 configuration error,
//! 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome};
use config::{ExperimentConfig, RawConfig};

#[derive(Debug, Parser)]
#[command(name = "kirchhoff", version, about = "Galerkin experiments for damped Kirchhoff wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap for ensemble and ledger work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Ensemble seed (overrides `attractor.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check the standing hypotheses on sampled ranges.
    Validate,
    /// Run one trajectory and its energy ledger.
    Simulate,
    /// Scan the (rho, chi) grid for admissible energy parameters.
    Feasibility,
    /// Pull ensembles back from the absorbing set.
    Pullback,
    /// Attractor distance against delta = 0 over the delta list.
    Semicontinuity,
    /// Split a trajectory into its decaying and regular parts.
    Decompose,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config::ConfigError { line: None, message: "--config PATH is required".into() })?;
    let text = std::fs::read_to_string(path).map_err(|e| config::ConfigError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut raw = RawConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        raw.set("attractor.seed", seed.to_string());
    }
    Ok(ExperimentConfig::from_raw(&raw)?)
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config::ConfigError { line: None, message: "--threads must be at least 1".into() }.into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config::ConfigError { line: None, message: e.to_string() })?;
    }
    let cfg = load(cli)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Validate => commands::validate(&cfg, out),
        Command::Simulate => commands::simulate(&cfg, out),
        Command::Feasibility => commands::feasibility(&cfg, out),
        Command::Pullback => commands::pullback(&cfg, out),
        Command::Semicontinuity => commands::semicontinuity(&cfg, out),
        Command::Decompose => commands::decompose(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome { failure: None }) => ExitCode::SUCCESS,
        Ok(Outcome { failure: Some(msg) }) => {
            eprintln!("property failure: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            let code = e.exit_code();
            let kind = match code {
                2 => "configuration error",
                3 => "numerical failure",
                _ => "property failure",
            };
            eprintln!("{kind}: {e}");
            ExitCode::from(code)
        }
    }
}
