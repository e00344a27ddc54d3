//! Command-line harness: configuration loading, dataset assembly and JSON
//! reports for the `gazekit` binary.

pub mod commands;
pub mod config;
pub mod demo;
pub mod error;
pub mod output;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{Cli, Command};
pub use error::{CliError, CliResult};

/// Environment variable capping worker threads; 0 or unset means one per core.
pub const THREADS_ENV: &str = "GAZEKIT_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = value.trim().parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV}: expected a thread count, got {value:?}")))?;
    // a pool may already exist when embedded; the first setting wins
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = configure_threads().and_then(|()| commands::execute(cli.command));
    match result {
        Ok(bytes) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(&bytes);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
