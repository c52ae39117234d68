//! `medgc` — batch pipelines for interventional mediation analysis with
//! time-varying exposures, time-varying mediators, and survival outcomes
//! (optionally with competing risks).
//!
//! Subcommands: `fit` (posterior model bank), `gcomp` (G-computation effect
//! and curve reports), `simulate` (replicated operating-characteristics
//! study), `impute` (external-cohort cumulative-exposure imputation), and
//! `report` (re-render saved JSON as a table).
//!
//! Exit codes: 0 success, 2 usage error, 3 validation error, 4 numeric
//! failure.

use std::process::ExitCode;

use clap::Parser;

mod commands;
mod error;
mod manifest;
mod settings;

use error::CliError;
use settings::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors render clap's message and exit as usage errors.
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = settings::resolve(cli)?;

    // One global pool shared by every stage; outputs are bit-identical at
    // any worker count, so this only affects wall-clock time.
    if let Some(workers) = settings.workers {
        if workers == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot size the worker pool: {e}")))?;
    }

    match &cli.command {
        Command::Fit(_) => commands::fit::run(&settings),
        Command::Gcomp(_) => commands::gcomp::run(&settings),
        Command::Simulate(_) => commands::simulate::run(&settings),
        Command::Impute(_) => commands::impute::run(&settings),
        Command::Report(_) => commands::report::run(&settings),
    }
}
