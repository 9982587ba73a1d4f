//! Benchmark suites with determinism cross-checks.
//!
//! Suite files are JSON:
//! ```json
//! {
//!   "threads": [1, 2, 8],
//!   "modes": ["practical"],
//!   "instances": [
//!     {"task": "balance", "n": 1000, "m": 100, "s": 31, "seed": 1},
//!     {"task": "wbalance", "n": 4096, "m": 64, "row_nnz": 64,
//!      "dist": "gauss", "seed": 2}
//!   ]
//! }
//! ```
//! Every reported ratio is recomputed from the stored assignment with the
//! verifier's plain loops, never trusted from the solver.

use anyhow::{Context, Result};
use clap::Args;
use discrepancy::exec;
use discrepancy::gen::{self, CounterRng, WeightKind};
use discrepancy::instance::hat;
use discrepancy::profile::{ConstantsProfile, Mode};
use discrepancy::solver::{solve_unweighted, solve_weighted, SolveConfig};
use serde::{Deserialize, Serialize};

#[derive(Args)]
pub struct BenchArgs {
    /// Suite spec (JSON).
    #[arg(long)]
    pub suite: std::path::PathBuf,
    /// JSON output path.
    #[arg(long)]
    pub out_json: Option<std::path::PathBuf>,
    /// CSV output path.
    #[arg(long)]
    pub out_csv: Option<std::path::PathBuf>,
}

#[derive(Debug, Deserialize)]
pub struct Suite {
    #[serde(default = "default_threads")]
    pub threads: Vec<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    pub instances: Vec<InstanceSpec>,
}

fn default_threads() -> Vec<usize> {
    vec![1, 2, 8]
}

fn default_modes() -> Vec<String> {
    vec!["practical".into()]
}

#[derive(Debug, Deserialize)]
pub struct InstanceSpec {
    pub task: String,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub s: usize,
    #[serde(default)]
    pub row_nnz: usize,
    #[serde(default)]
    pub dist: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

/// One row of the report: one instance under one mode and thread count.
#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub task: String,
    pub n: usize,
    pub m: usize,
    pub size: usize,
    pub mode: String,
    pub threads: usize,
    pub wall_ms: f64,
    pub max_disc: f64,
    pub max_ratio: f64,
    pub cert_ok: bool,
    pub deterministic: bool,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub ratio_p50: f64,
    pub ratio_p90: f64,
    pub ratio_p99: f64,
    pub all_deterministic: bool,
    pub all_certified: bool,
}

pub fn run(args: BenchArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.suite)
        .with_context(|| format!("reading {}", args.suite.display()))?;
    let suite: Suite = serde_json::from_str(&text).context("parsing the suite spec")?;
    let mut rows = Vec::new();
    let mut all_deterministic = true;
    for spec in &suite.instances {
        for mode in &suite.modes {
            let profile = ConstantsProfile::for_mode(
                Mode::parse(mode).with_context(|| format!("unknown mode {mode:?}"))?,
            );
            let mut baseline: Option<Vec<i8>> = None;
            for &threads in &suite.threads {
                let row = run_one(spec, profile, mode, threads, &mut baseline)?;
                all_deterministic &= row.deterministic;
                rows.push(row);
            }
        }
    }
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.max_ratio).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| -> f64 {
        if ratios.is_empty() {
            return 0.0;
        }
        let idx = ((ratios.len() as f64 - 1.0) * p).round() as usize;
        ratios[idx]
    };
    let report = BenchReport {
        ratio_p50: pct(0.50),
        ratio_p90: pct(0.90),
        ratio_p99: pct(0.99),
        all_deterministic,
        all_certified: rows.iter().all(|r| r.cert_ok),
        rows,
    };
    if let Some(path) = &args.out_json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.out_csv {
        std::fs::write(path, to_csv(&report))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if args.out_json.is_none() && args.out_csv.is_none() {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(if report.all_certified && report.all_deterministic { 0 } else { 1 })
}

// column order is fixed; downstream plotting depends on it
const CSV_HEADER: &str = "task,n,m,size,mode,threads,wall_ms,max_disc,max_ratio,cert_ok,deterministic";

fn to_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{},{:.6},{},{}\n",
            r.task, r.n, r.m, r.size, r.mode, r.threads, r.wall_ms, r.max_disc, r.max_ratio,
            r.cert_ok, r.deterministic
        ));
    }
    out
}

fn run_one(
    spec: &InstanceSpec,
    profile: ConstantsProfile,
    mode: &str,
    threads: usize,
    baseline: &mut Option<Vec<i8>>,
) -> Result<BenchRow> {
    let started = std::time::Instant::now();
    let (chi, max_disc, max_ratio, cert_ok, size) = match spec.task.as_str() {
        "balance" => {
            let sys = gen::random_set_system(spec.n, spec.m, spec.s, &CounterRng::new(spec.seed));
            let (chi, out) =
                exec::install(threads, || solve_unweighted(&sys, &profile))?;
            // recompute the ratio from the assignment, independently
            let log_m = hat(sys.m()).ln();
            let mut max_ratio = 0.0f64;
            let mut max_disc = 0.0f64;
            for row in &sys.sets {
                let mut acc: i64 = 0;
                for &j in row {
                    acc += chi.chi[j] as i64;
                }
                let d = acc.abs() as f64;
                max_disc = max_disc.max(d);
                if !row.is_empty() {
                    max_ratio = max_ratio.max(d / (row.len() as f64 * log_m).sqrt());
                }
            }
            (chi.chi, max_disc, max_ratio, out.report.certified(), spec.s)
        }
        "wbalance" => {
            let kind = spec
                .dist
                .as_deref()
                .and_then(WeightKind::parse)
                .unwrap_or(WeightKind::Gauss);
            let sys = gen::random_weighted_system(
                spec.n,
                spec.m,
                spec.row_nnz.max(1),
                kind,
                &CounterRng::new(spec.seed),
            );
            let config = SolveConfig::new(profile);
            let (chi, out) = exec::install(threads, || solve_weighted(&sys, &config))?;
            let log_m = hat(sys.m).ln();
            let mut max_ratio = 0.0f64;
            let mut max_disc = 0.0f64;
            for row in &sys.rows {
                let mut acc = 0.0f64;
                let mut q = 0.0f64;
                for &(j, a) in row {
                    acc += a * chi.chi[j] as f64;
                    q += a * a;
                }
                max_disc = max_disc.max(acc.abs());
                if q > 0.0 {
                    max_ratio = max_ratio.max(acc.abs() / (q * log_m).sqrt());
                }
            }
            (chi.chi, max_disc, max_ratio, out.report.certified(), spec.row_nnz)
        }
        other => anyhow::bail!("bench supports balance|wbalance, got {other:?}"),
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let deterministic = match baseline {
        Some(base) => base == &chi,
        None => {
            *baseline = Some(chi);
            true
        }
    };
    Ok(BenchRow {
        task: spec.task.clone(),
        n: spec.n,
        m: spec.m,
        size,
        mode: mode.to_string(),
        threads,
        wall_ms,
        max_disc,
        max_ratio,
        cert_ok,
        deterministic,
    })
}
