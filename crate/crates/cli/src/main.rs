use std::process::ExitCode;

use clap::Parser;

mod config;

use config::{Cli, Command, RunConfig};

/// Exit status for usage errors; clap uses the same code for bad flags.
const EXIT_USAGE: u8 = 2;
/// Numerical failures and any other runtime error.
const EXIT_NUMERICAL: u8 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;
    let config = match RunConfig::resolve(&args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match config::execute(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, config::RunError::Usage(_)) {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
    }
}
