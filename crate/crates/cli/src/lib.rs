//! Command-line front end for the `roughchain` pricer.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::CommandOutput;
use crate::config::{resolve_config_path, Override, RunConfig, CONFIG_ENV};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "roughchain",
    version,
    about = "CTMC pricing for rough stochastic local volatility models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Override a config entry, e.g. `--set numerics.x_nodes=40`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Price the configured option.
    Price,
    /// CSV sweep over models, perturbations and grid sizes.
    Table,
    /// CTMC price against a Monte Carlo estimate.
    CompareMc,
    /// Internal consistency checks; needs no config.
    Selfcheck,
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<CommandOutput, CliError> {
    configure_threads(cli.threads)?;
    if cli.command == Command::Selfcheck {
        return commands::selfcheck();
    }
    let overrides = cli
        .overrides
        .iter()
        .map(|s| Override::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let path = resolve_config_path(cli.config.as_deref());
    let (config, provenance) = RunConfig::load(&path, &overrides)?;
    match cli.command {
        Command::Price => commands::price(&config, &provenance),
        Command::Table => commands::table(&config),
        Command::CompareMc => commands::compare_mc(&config, &provenance),
        Command::Selfcheck => unreachable!("handled above"),
    }
}

/// Runs the command, writes its output and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    let output = match execute(cli) {
        Ok(output) => output,
        Err(e) => {
            eprintln!("roughchain: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &output.text),
        None => {
            print!("{}", output.text);
            Ok(())
        }
    };
    if let Err(e) = written {
        let e = CliError::Output(e);
        eprintln!("roughchain: {e}");
        return e.exit_code();
    }
    match output.failure {
        Some(e) => {
            eprintln!("roughchain: {e}");
            e.exit_code()
        }
        None => 0,
    }
}
