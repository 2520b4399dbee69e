//! `idmr`: command-line driver for the retrieval pipeline.
//!
//! Exit codes: 0 on success, 1 for usage or validation errors, 2 for I/O
//! and file-format errors.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn run(cli: Cli) -> idmr_core::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| idmr_core::Error::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a)?,
        Command::World(a) => commands::world(a)?,
        Command::Train(a) => commands::train(a)?,
        Command::Index(a) => commands::index(a)?,
        Command::Search(a) => commands::search(a)?,
        Command::Bench(a) => commands::bench(a)?,
        Command::Eval(a) => commands::eval(a)?,
        Command::Validate(a) => {
            if commands::validate(a)? > 0 {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_io_or_format() { 2 } else { 1 })
        }
    }
}
