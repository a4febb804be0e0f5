mod args;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliError;

fn run() -> Result<(), CliError> {
    let argv = config::merge(std::env::args_os().collect())?;
    let cli = Cli::parse_from(argv);
    match &cli.command {
        Command::Capacity(a) => commands::run_capacity(a),
        Command::SweepN(a) => commands::run_sweep_n(a),
        Command::SweepA(a) => commands::run_sweep_a(a),
        Command::Bounds(a) => commands::run_bounds(a),
        Command::Simulate(a) => commands::run_simulate(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polcap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
