//! Command-line front end. [`run_cli`] parses arguments, runs one
//! subcommand and maps failures to exit codes: `1` for user errors (bad
//! flags, unreadable or invalid input), `2` for internal numerical failures.

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub mod args;
mod commands;
pub mod output;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<weakfactor::Error> for CliError {
    fn from(e: weakfactor::Error) -> Self {
        if e.is_user_error() {
            CliError::User(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs the command line `argv` (program name first) and returns the
/// process exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let text = e.to_string();
                    let first = text.lines().next().unwrap_or("invalid arguments");
                    eprintln!("{}", one_line(first));
                    1
                }
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::SelectR(a) => commands::select_r(a),
        Command::Strengths(a) => commands::strengths_cmd(a),
        Command::Rolling(a) => commands::rolling(a),
        Command::Heatmap(a) => commands::heatmap(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(e.message()));
            e.exit_code()
        }
    }
}
