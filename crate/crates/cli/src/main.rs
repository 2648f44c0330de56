//! `bernoulli`: simulations, verification reports, level sweeps and
//! convergence studies for the level-set energy ledger.
//!
//! Exit codes: 0 when everything passes, 1 when a verification check fails,
//! 2 on usage or setup errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::Config;

#[derive(Parser)]
#[command(name = "bernoulli", version, about = "Level-set energy ledger for periodic Navier-Stokes flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Velocity snapshot to analyse instead of the configured initial state.
    #[arg(long, global = true, value_name = "PATH")]
    snapshot: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Suppress progress and summary lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Integrate the configured flow and write snapshots and an energy log.
    Simulate,
    /// Check the identity, global balance and strip ledger of one state.
    Verify,
    /// Write the strip ledger as CSV at every snapshot time.
    Sweep,
    /// Fit convergence orders of strip residuals across resolutions.
    Converge,
}

fn build_run(cli: Cli) -> Result<(Command, Run)> {
    let needs_config = match cli.command {
        Command::Simulate | Command::Converge => true,
        Command::Verify | Command::Sweep => cli.snapshot.is_none(),
    };
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None if needs_config => bail!("this command needs --config{}", if cli.command == Command::Verify || cli.command == Command::Sweep { " or --snapshot" } else { "" }),
        None => Config::default(),
    };
    if cli.snapshot.is_some() && matches!(cli.command, Command::Simulate | Command::Converge) {
        bail!("--snapshot is only used by verify and sweep");
    }
    if let Some(dir) = cli.output {
        config.output.dir = dir;
    }
    Ok((
        cli.command,
        Run {
            config,
            snapshot: cli.snapshot,
            quiet: cli.quiet,
        },
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = build_run(cli).and_then(|(command, run)| match command {
        Command::Simulate => commands::simulate(&run),
        Command::Verify => commands::verify(&run),
        Command::Sweep => commands::sweep(&run),
        Command::Converge => commands::converge(&run),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
