//! Instance generation.

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use discrepancy::gen::{self, CounterRng, WeightKind};
use discrepancy::io;
use discrepancy::lattice;

#[derive(Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Subcommand)]
pub enum GenKind {
    /// Set system: `n m`, then `k j_1 ... j_k` per line.
    Sets {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Elements per set.
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Weighted system: `n m nnz`, then `i j a` per line.
    Weighted {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Nonzeros per row.
        #[arg(long, default_value_t = 16)]
        row_nnz: usize,
        /// gauss | lognormal | powerlaw | pm1
        #[arg(long, default_value = "gauss")]
        dist: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Rounding instance: a [0,1]-matrix file and a fraction-vector file.
    Lattice {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 16)]
        row_nnz: usize,
        /// Fixed-point bits for the emitted p (hex lines).
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_matrix: std::path::PathBuf,
        #[arg(long)]
        out_p: std::path::PathBuf,
    },
    /// Graph edge list: `u v` per line.
    Graph {
        #[arg(long)]
        n: usize,
        /// Exact degree (d-regular); conflicts with --avg-degree.
        #[arg(long)]
        degree: Option<usize>,
        /// Expected average degree.
        #[arg(long)]
        avg_degree: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

pub fn run(args: GenArgs) -> Result<i32> {
    match args.kind {
        GenKind::Sets { n, m, s, seed, out } => {
            let sys = gen::random_set_system(n, m, s, &CounterRng::new(seed));
            std::fs::write(&out, io::format_set_system(&sys))
                .with_context(|| format!("writing {}", out.display()))?;
        }
        GenKind::Weighted { n, m, row_nnz, dist, seed, out } => {
            let kind = WeightKind::parse(&dist)
                .with_context(|| format!("unknown distribution {dist:?}"))?;
            let sys = gen::random_weighted_system(n, m, row_nnz, kind, &CounterRng::new(seed));
            std::fs::write(&out, io::format_weighted_system(&sys))
                .with_context(|| format!("writing {}", out.display()))?;
        }
        GenKind::Lattice { n, m, row_nnz, bits, seed, out_matrix, out_p } => {
            let rng = CounterRng::new(seed);
            let a = gen::random_unit_matrix(n, m, row_nnz, &rng);
            let p = gen::random_fraction_vector(n, &rng);
            let bits = bits.unwrap_or_else(|| lattice::default_bits(n));
            let q = lattice::quantize(&p, bits)?;
            std::fs::write(&out_matrix, io::format_weighted_system(&a))
                .with_context(|| format!("writing {}", out_matrix.display()))?;
            let mut text = String::new();
            for v in &q.values {
                text.push_str(&format!("0x{v:x}\n"));
            }
            std::fs::write(&out_p, text).with_context(|| format!("writing {}", out_p.display()))?;
            eprintln!("p emitted as hex numerators over 2^{bits}; pass --bits {bits} to solve");
        }
        GenKind::Graph { n, degree, avg_degree, seed, out } => {
            let rng = CounterRng::new(seed);
            let edges = match (degree, avg_degree) {
                (Some(d), None) => gen::random_regular_graph(n, d, &rng),
                (None, Some(f)) => gen::random_graph(n, f, &rng),
                _ => bail!("pass exactly one of --degree or --avg-degree"),
            };
            let mut text = String::new();
            for (u, v) in edges {
                text.push_str(&format!("{u} {v}\n"));
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(0)
}
