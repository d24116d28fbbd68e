//! `psiflat` command-line tool.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for numerical or
//! precondition failures. Machine output is line-delimited JSON on stdout;
//! human summaries go to stderr.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod commands;
mod config;

use args::{Cli, Command, SUBCOMMANDS};
use commands::Usage;

fn exit_status(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match e.downcast_ref::<psiflat::Error>() {
        Some(psiflat::Error::InvalidConfig(_) | psiflat::Error::InvalidDims(_)) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Paths(a) => commands::paths(a),
        Command::Transform(a) => commands::transform(a),
        Command::Flatness(a) => commands::flatness(a),
        Command::Landscape(a) => commands::landscape(a),
        Command::Verify(a) => commands::verify(a),
        Command::Bound(a) => commands::bound(a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
