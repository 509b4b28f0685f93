//! `taustar`: independence tests, null-law queries, power and sample-size
//! bounds, and simulation studies from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
//! `TAUSTAR_THREADS` sets the worker thread count; results do not depend on it.

mod commands;
mod error;
mod input;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{NulldistArgs, PowerArgs, SimulateArgs, TestArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "taustar", version, about = "Sign covariance t* independence tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test independence of the two columns of a CSV file.
    Test(TestArgs),
    /// Evaluate the asymptotic null law of n·t*.
    Nulldist(NulldistArgs),
    /// Normal-approximation power or sample-size bound.
    Power(PowerArgs),
    /// Run a Monte Carlo study.
    Simulate(SimulateArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("TAUSTAR_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| CliError::Usage(format!("TAUSTAR_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let run = configure_threads().and_then(|()| match cli.command {
        Command::Test(a) => commands::test(&a, &mut stdout),
        Command::Nulldist(a) => commands::nulldist(&a, &mut stdout),
        Command::Power(a) => commands::power(&a, &mut stdout),
        Command::Simulate(a) => commands::simulate(&a, &mut stdout),
    });
    let _ = stdout.flush();
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("taustar: {e}");
            e.exit_code()
        }
    }
}
