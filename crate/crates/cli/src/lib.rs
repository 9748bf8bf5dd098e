//! Command-line front end: `extract`, `replay` and `encode`.
//!
//! Exit status: 0 success or bug reproduced, 1 finished without reproducing,
//! 2 usage or input error, 3 runtime failure.

pub mod args;
pub mod commands;
pub mod config;

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};
pub use commands::{cmd_encode, cmd_extract, cmd_replay};
use config::{FileConfig, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    NoBug = 1,
    Usage = 2,
    Failure = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Usage(_) => Exit::Usage,
            CliError::Runtime(_) => Exit::Failure,
        }
    }
}

/// Parses arguments and runs the command, reporting errors on stderr.
pub fn run<I, T>(argv: I) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage } else { Exit::Success };
        }
    };
    match dispatch(&cli) {
        Ok(exit) => exit,
        Err(e) => {
            eprintln!("bugreplay: {e}");
            e.exit()
        }
    }
}

pub fn log_level(verbose: u8) -> log::LevelFilter {
    match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    }
}

fn dispatch(cli: &Cli) -> Result<Exit, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Extract(args) => cmd_extract(&RunConfig::for_extract(args, file)?),
        Command::Replay(args) => cmd_replay(&RunConfig::for_replay(args, file)?),
        Command::Encode(args) => cmd_encode(args),
    }
}
