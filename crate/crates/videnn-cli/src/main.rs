//! `videnn`: blind video denoising toolkit.
//!
//! Subcommands cover the whole pipeline: noise synthesis, dataset
//! construction, two-phase training, denoising (with ablation modes),
//! evaluation and diagnostics. Exit codes: 0 success, 1 usage/config error,
//! 2 data error, 3 numerical failure.

mod args;
mod commands;
mod util;

use std::process::ExitCode;

use clap::Parser;
use videnn_core::Error;

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes, everything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParam(_) => 1,
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } => 3,
        Error::ShapeMismatch(_)
        | Error::EmptyInput(_)
        | Error::WeightFile(_)
        | Error::Checkpoint(_)
        | Error::Manifest { .. }
        | Error::Io(_)
        | Error::Image(_) => 2,
    }
}
