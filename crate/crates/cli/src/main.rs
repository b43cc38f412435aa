//! `seedplan`: command-line front end.
//!
//! Exit status: 0 on success, 1 when a scheme fails validation, 2 on a usage
//! error, 3 when an input cannot be parsed or a computation fails.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{CliError, Outcome};

const THREADS_VAR: &str = "SEEDPLAN_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got {text:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("{THREADS_VAR}: {e}")))
}

fn run(cli: &Cli) -> Outcome {
    configure_threads()?;
    match &cli.command {
        Command::Efficiency(a) => commands::efficiency(a),
        Command::Scheme(a) => commands::scheme(a),
        Command::Validate(a) => commands::validate(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Dimension(a) => commands::dimension(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("seedplan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
