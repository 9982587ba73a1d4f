//! Solve dispatch and report emission.

use anyhow::{Context, Result};
use clap::Args;
use discrepancy::edgecolor::{color_edges, Graph};
use discrepancy::exec;
use discrepancy::instance::Assignment;
use discrepancy::io;
use discrepancy::lattice;
use discrepancy::profile::{ConstantsProfile, Mode};
use discrepancy::solver::{solve_unweighted, solve_weighted, LevelStats, SolveConfig};
use serde::{Deserialize, Serialize};

#[derive(Args)]
pub struct SolveArgs {
    /// balance | wbalance | lattice | edgecolor
    pub task: String,
    /// Instance file (matrix file for lattice).
    #[arg(long)]
    pub input: std::path::PathBuf,
    /// Fraction-vector file (lattice only).
    #[arg(long)]
    pub p: Option<std::path::PathBuf>,
    /// Fixed-point bits for the fraction vector (lattice only).
    #[arg(long)]
    pub bits: Option<u32>,
    /// theory | practical
    #[arg(long, default_value = "practical")]
    pub mode: String,
    /// Worker threads (0 = library default); DISC_THREADS also applies.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override the potential tail coefficient.
    #[arg(long)]
    pub tail_coeff: Option<f64>,
    /// Floor for the potential tail scale M (must be >= max(m, 2)).
    #[arg(long)]
    pub pot_m: Option<f64>,
    /// Integerization exponent for weighted solves.
    #[arg(long, default_value_t = 10)]
    pub scale_exp: u32,
    /// Assignment / coloring / rounding output path.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
}

/// JSON report shared by all tasks.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub task: String,
    pub mode: String,
    pub n: usize,
    pub m: usize,
    pub threads: usize,
    pub wall_ms: f64,
    pub certified: bool,
    pub max_disc: f64,
    pub max_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cert_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub colors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub palette_constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelStats>,
    pub sdisc: Vec<f64>,
    pub disc: Vec<f64>,
    pub bound: Vec<f64>,
    pub ratio: Vec<f64>,
}

pub fn profile_for(
    mode: &str,
    tail_coeff: Option<f64>,
    pot_m: Option<f64>,
) -> Result<ConstantsProfile> {
    let mode = Mode::parse(mode).with_context(|| format!("unknown mode {mode:?}"))?;
    let mut profile = ConstantsProfile::for_mode(mode);
    if let Some(t) = tail_coeff {
        profile.tail_coeff = t;
        profile.lambda_coeff = (t / 2.0).max(4.0);
    }
    if let Some(m) = pot_m {
        profile.pot_m_floor = m;
    }
    Ok(profile)
}

pub fn run(args: SolveArgs) -> Result<i32> {
    let threads = crate::threads_from(args.threads);
    let profile = profile_for(&args.mode, args.tail_coeff, args.pot_m)?;
    let started = std::time::Instant::now();
    let (report, artifact) = exec::install(threads, || -> Result<(SolveReport, String)> {
        solve_task(&args, profile)
    })?;
    let mut report = report;
    report.threads = if threads == 0 { exec::current_threads() } else { threads };
    report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    if let Some(out) = &args.out {
        std::fs::write(out, &artifact).with_context(|| format!("writing {}", out.display()))?;
    } else {
        print!("{artifact}");
    }
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.report {
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    } else {
        eprintln!("{json}");
    }
    Ok(if report.certified { 0 } else { 1 })
}

fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn solve_task(args: &SolveArgs, profile: ConstantsProfile) -> Result<(SolveReport, String)> {
    let mode = profile.mode.to_string();
    match args.task.as_str() {
        "balance" => {
            let sys = io::parse_set_system(&read(&args.input)?)?;
            let (chi, out) = solve_unweighted(&sys, &profile)?;
            let report = SolveReport {
                task: "balance".into(),
                mode,
                n: sys.n,
                m: sys.m(),
                threads: 0,
                wall_ms: 0.0,
                certified: out.report.certified(),
                max_disc: out.report.max_disc(),
                max_ratio: out.max_ratio,
                cert_constant: Some(out.certified_cap),
                colors: None,
                palette_constant: None,
                levels: out.levels,
                sdisc: out.report.sdisc,
                disc: out.report.disc,
                bound: out.report.bound,
                ratio: out.report.ratio,
            };
            Ok((report, io::format_assignment(&chi)))
        }
        "wbalance" => {
            let sys = io::parse_weighted_system(&read(&args.input)?)?;
            let config = SolveConfig { profile, scale_exp: args.scale_exp };
            let (chi, out) = solve_weighted(&sys, &config)?;
            let report = SolveReport {
                task: "wbalance".into(),
                mode,
                n: sys.n,
                m: sys.m,
                threads: 0,
                wall_ms: 0.0,
                certified: out.report.certified(),
                max_disc: out.report.max_disc(),
                max_ratio: out.report.max_ratio(),
                cert_constant: Some(out.cert_constant),
                colors: None,
                palette_constant: None,
                levels: out.levels,
                sdisc: out.report.sdisc,
                disc: out.report.disc,
                bound: out.report.bound,
                ratio: out.report.ratio,
            };
            Ok((report, io::format_assignment(&chi)))
        }
        "lattice" => {
            let a = io::parse_weighted_system(&read(&args.input)?)?;
            let p_path = args
                .p
                .as_ref()
                .context("lattice needs --p <fraction vector>")?;
            let bits = args.bits.unwrap_or_else(|| lattice::default_bits(a.n));
            let values = io::parse_fraction_vector(&read(p_path)?, bits)?;
            let p = lattice::quantize(&values, bits)?;
            let config = SolveConfig { profile, scale_exp: args.scale_exp };
            let (q, rep) = lattice::round_lattice(&a, &p, &config)?;
            let line = q
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(" ")
                + "\n";
            let report = SolveReport {
                task: "lattice".into(),
                mode,
                n: a.n,
                m: a.m,
                threads: 0,
                wall_ms: 0.0,
                certified: rep.certified,
                max_disc: rep.error.iter().cloned().fold(0.0, f64::max),
                max_ratio: rep.max_ratio,
                cert_constant: None,
                colors: None,
                palette_constant: None,
                levels: vec![],
                sdisc: rep.error.clone(),
                disc: rep.error.clone(),
                bound: rep.bound.clone(),
                ratio: rep.ratio.clone(),
            };
            Ok((report, line))
        }
        "edgecolor" => {
            let edges = io::parse_edge_list(&read(&args.input)?)?;
            let n = edges
                .iter()
                .map(|&(u, v)| u.max(v) + 1)
                .max()
                .unwrap_or(0);
            let g = Graph::new(n, edges)?;
            let (coloring, rep) = color_edges(&g, &profile)?;
            let mut lines = String::new();
            for (e, &(u, v)) in g.edges.iter().enumerate() {
                lines.push_str(&format!("{u} {v} {}\n", coloring.color[e]));
            }
            let report = SolveReport {
                task: "edgecolor".into(),
                mode,
                n: g.n,
                m: g.m(),
                threads: 0,
                wall_ms: 0.0,
                certified: coloring.verify(&g).is_ok(),
                max_disc: rep.colors as f64,
                max_ratio: rep.k_constant,
                cert_constant: None,
                colors: Some(rep.colors),
                palette_constant: Some(rep.k_constant),
                levels: vec![],
                sdisc: vec![],
                disc: vec![],
                bound: vec![],
                ratio: vec![],
            };
            Ok((report, lines))
        }
        other => anyhow::bail!("unknown task {other:?} (balance|wbalance|lattice|edgecolor)"),
    }
}

/// Parses an assignment file.
pub fn read_assignment(path: &std::path::Path) -> Result<Assignment> {
    Ok(io::parse_assignment(&read(path)?)?)
}

