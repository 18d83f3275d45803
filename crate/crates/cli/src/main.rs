mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

const THREADS_VAR: &str = "COULOMB_LAB_THREADS";

/// Exit status carried back to `main`.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration (exit 2).
    Usage(String),
    /// A check did not pass (exit 1).
    Check(String),
    /// Numerical or I/O failure (exit 1).
    Runtime(String),
}

impl From<coulomb_core::Error> for Failure {
    fn from(e: coulomb_core::Error) -> Self {
        use coulomb_core::Error::*;
        match e {
            UnknownPotential(_) | Config(_) | Domain(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        Failure::Usage(format!(
            "{THREADS_VAR} must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Critical(a) => commands::critical(&a),
        Command::Rate(a) => commands::rate(&a),
        Command::Density(a) => commands::density(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Sample(a) => commands::sample(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
