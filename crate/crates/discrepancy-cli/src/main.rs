//! `disc`: generate, solve, verify, and benchmark discrepancy instances.
//!
//! Exit codes: 0 on success, 1 when a certificate fails verification,
//! 2 on input errors.

mod bench;
mod generate;
mod solve;
mod verify;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "disc", version, about = "deterministic discrepancy toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reproducible instance from a 64-bit seed.
    Gen(generate::GenArgs),
    /// Solve an instance and emit the assignment plus a JSON report.
    Solve(solve::SolveArgs),
    /// Recheck a solve report against the raw instance, independently.
    Verify(verify::VerifyArgs),
    /// Run a benchmark suite with determinism cross-checks.
    Bench(bench::BenchArgs),
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Gen(args) => generate::run(args),
        Command::Solve(args) => solve::run(args),
        Command::Verify(args) => verify::run(args),
        Command::Bench(args) => bench::run(args),
    };
    match code {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

/// Worker count: flag beats `DISC_THREADS` beats the pool default.
pub(crate) fn threads_from(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("DISC_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}
