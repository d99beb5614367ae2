//! `rpca`: robust PCA, subspace tracking and recovery sweeps.
//!
//! Exit codes: 0 on success (or when no ground truth is available), 2 when a
//! decomposition misses the recovery threshold, 1 on usage or data errors.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::Track(a) => commands::track(a),
        Command::Phase(a) => commands::phase(a),
        Command::Noise(a) => commands::noise(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::RecoveryFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
