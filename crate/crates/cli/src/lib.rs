//! Command-line harness for weak-attention suppression.
//!
//! Every command is a pure function of its configuration file, flags and
//! seed. Exit codes: 0 on success, 1 for invalid input or configuration, 2
//! when a run or a check fails.

pub mod args;
mod commands;
pub mod config;
mod error;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use args::{Cli, Command};
pub use config::RunConfig;
pub use error::CliError;

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::DemoTrain(a) => commands::demo_train(a, out),
        Command::Analyze(a) => commands::analyze(a, out),
        Command::SweepGamma(a) => commands::sweep_gamma(a, out),
        Command::Gradcheck(a) => commands::gradcheck(a, out),
        Command::OracleCheck(a) => commands::oracle_check(a, out),
    }
}

/// Parses `args`, runs the command with stdout as output and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
