//! `sle-lab`: command-line front end.
//!
//! Exit status: 0 on success, 2 for bad arguments or unreadable result
//! files, 3 for numerical failure or walker extinction, 4 when `--check`
//! finds a threshold violated, 1 for I/O errors.

mod args;
mod commands;
mod output;
mod surd;

use std::process::ExitCode;

use clap::Parser;
use sle_lab::Error;

use crate::args::{Cli, Command};

/// Thread count override, taking precedence over `--workers`.
const THREADS_ENV: &str = "SLE_LAB_THREADS";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Check(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Check(_) => 4,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Check(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Domain(_) | Error::Schema(_) | Error::Csv(_) | Error::Json(_) => Failure::Usage(msg),
            Error::Numerical(_) | Error::Instability { .. } | Error::Extinction { .. } => Failure::Numerical(msg),
            Error::Io(_) => Failure::Io(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn workers(command: &Command) -> Result<usize, Failure> {
    let flag = match command {
        Command::SimLoewner(a) => a.run.workers,
        Command::SimDiffusion(a) => a.run.workers,
        Command::SolvePde(a) => a.run.workers,
        Command::MartingaleCheck(a) => a.run.workers,
        Command::Walkers(a) => a.run.workers,
        _ => 1,
    };
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(flag as usize),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = workers(&cli.command).and_then(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
        commands::run(&cli.command, n)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sle-lab: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
