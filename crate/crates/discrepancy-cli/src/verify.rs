//! Independent verification: recomputes every reported quantity from the
//! raw instance with plain sequential loops, sharing no evaluation code
//! with the solvers.

use anyhow::{Context, Result};
use clap::Args;
use discrepancy::io;

use crate::solve::SolveReport;

#[derive(Args)]
pub struct VerifyArgs {
    /// Instance file (the solve input).
    #[arg(long)]
    pub instance: std::path::PathBuf,
    /// Assignment file (the solve output).
    #[arg(long)]
    pub assignment: std::path::PathBuf,
    /// JSON report from the solve.
    #[arg(long)]
    pub report: std::path::PathBuf,
}

fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn run(args: VerifyArgs) -> Result<i32> {
    let report: SolveReport = serde_json::from_str(&read(&args.report)?)
        .context("parsing the solve report")?;
    let chi = crate::solve::read_assignment(&args.assignment)?;

    // independent evaluation: one plain loop per row, no shared helpers
    let sdisc: Vec<f64> = match report.task.as_str() {
        "balance" => {
            let sys = io::parse_set_system(&read(&args.instance)?)?;
            anyhow::ensure!(chi.len() == sys.n, "assignment length mismatch");
            sys.sets
                .iter()
                .map(|row| {
                    let mut acc: i64 = 0;
                    for &j in row {
                        acc += chi.chi[j] as i64;
                    }
                    acc as f64
                })
                .collect()
        }
        "wbalance" => {
            let sys = io::parse_weighted_system(&read(&args.instance)?)?;
            anyhow::ensure!(chi.len() == sys.n, "assignment length mismatch");
            sys.rows
                .iter()
                .map(|row| {
                    let mut acc = 0.0f64;
                    for &(j, a) in row {
                        acc += a * chi.chi[j] as f64;
                    }
                    acc
                })
                .collect()
        }
        other => anyhow::bail!("verify supports balance|wbalance reports, got {other:?}"),
    };

    let mut failures = 0usize;
    for (i, &s) in sdisc.iter().enumerate() {
        let reported = report.sdisc[i];
        let tol = 1e-9 * reported.abs().max(1.0);
        if (s - reported).abs() > tol {
            println!("row {i}: FAIL recomputed sdisc {s} != reported {reported}");
            failures += 1;
            continue;
        }
        if s.abs() > report.bound[i] * (1.0 + 1e-9) + 1e-9 {
            println!(
                "row {i}: FAIL |disc| {} exceeds certified bound {}",
                s.abs(),
                report.bound[i]
            );
            failures += 1;
            continue;
        }
        println!("row {i}: pass (|disc| {} <= {})", s.abs(), report.bound[i]);
    }
    if failures == 0 {
        println!("all {} rows pass", sdisc.len());
        Ok(0)
    } else {
        println!("{failures} rows failed");
        Ok(1)
    }
}
