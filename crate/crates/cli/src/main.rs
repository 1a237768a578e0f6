//! `bcseg`: every pipeline stage as a subcommand.
//!
//! Volumes travel between stages as block stores. Structured results go to
//! standard output (or `--out`) as JSON, diagnostics to standard error, and
//! each run leaves a `run_config.json` echo next to its primary output.
//!
//! Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O or
//! store integrity errors.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

fn exit_code(e: &bcseg_core::Error) -> u8 {
    use bcseg_core::Error::*;
    match e {
        Io { .. } | Parse { .. } | Integrity(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
