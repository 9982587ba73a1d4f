//! Lattice approximation: derandomized rounding of a fractional vector.
//!
//! `p` is quantized to `B` fixed-point bits, then rounded one bit per stage:
//! stage `k` gathers the coordinates whose lowest live bit is set and
//! decides, via weighted set balancing on the corresponding columns of `A`,
//! which of them round up and which round down. All stage arithmetic is
//! exact fixed point (u128 numerators over `2^B`), so "one bit removed per
//! stage" is a machine-checkable invariant rather than a float
//! approximation.

use crate::error::{Error, Result};
use crate::instance::{hat, WeightedSystem};
use crate::solver::{solve_weighted, SolveConfig};
use serde::{Deserialize, Serialize};

/// Nonnegative fixed-point vector with `bits` fractional bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointVector {
    /// Numerators over `2^bits`; every value is in `[0, 2^bits]`.
    pub values: Vec<u128>,
    pub bits: u32,
}

/// Largest supported bit depth (keeps all u128 arithmetic exact).
pub const MAX_BITS: u32 = 100;

/// Default bit depth for a ground set of size `n`.
pub fn default_bits(n: usize) -> u32 {
    ((10.0 * hat(n).log2()).ceil() as u32).clamp(4, MAX_BITS)
}

/// Round-to-nearest quantization of `p in [0,1]^n`; per-coordinate error is
/// at most `2^-(bits+1)`.
pub fn quantize(p: &[f64], bits: u32) -> Result<FixedPointVector> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::invalid(format!("bit depth {bits} outside [1, {MAX_BITS}]")));
    }
    let scale = (2.0f64).powi(bits as i32);
    let mut values = Vec::with_capacity(p.len());
    for (j, &x) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(format!("p[{j}] = {x} outside [0, 1]")));
        }
        values.push((x * scale).round() as u128);
    }
    Ok(FixedPointVector { values, bits })
}

impl FixedPointVector {
    pub fn to_f64(&self) -> Vec<f64> {
        let scale = (2.0f64).powi(-(self.bits as i32));
        self.values.iter().map(|&v| v as f64 * scale).collect()
    }
}

/// Per-row outcome of the rounding pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeReport {
    /// Measured `|sum_j a_ij (q_j - p_j)|` against the quantized `p`.
    pub error: Vec<f64>,
    /// `mu_i = sum_j a_ij p_j`.
    pub mu: Vec<f64>,
    /// `error / (sqrt(mu ln m̂) + ln m̂)`.
    pub ratio: Vec<f64>,
    /// Summed per-stage certificates.
    pub bound: Vec<f64>,
    pub stages: u32,
    pub max_ratio: f64,
    pub certified: bool,
}

/// Rounds `p` to a 0/1 vector, keeping every row of `A q` close to `A p`.
pub fn round_lattice(
    a: &WeightedSystem,
    p: &FixedPointVector,
    config: &SolveConfig,
) -> Result<(Vec<u8>, LatticeReport)> {
    if p.values.len() != a.n {
        return Err(Error::invalid("p length != matrix columns"));
    }
    for (i, row) in a.rows.iter().enumerate() {
        if row.iter().any(|&(_, v)| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid(format!("row {i} has an entry outside [0, 1]")));
        }
    }
    let b = p.bits;
    let m = a.m;
    let mut v = p.values.clone();
    let full: u128 = 1u128 << b;
    if v.iter().any(|&x| x > full) {
        return Err(Error::invalid("fixed-point value above 1"));
    }
    let mut bound = vec![0.0f64; m];
    for k in 1..=b {
        let weight: u128 = 1u128 << (k - 1);
        let live: Vec<usize> = (0..a.n).filter(|&j| v[j] & weight != 0).collect();
        if live.is_empty() {
            continue;
        }
        let (sub, row_map) = a.restrict(&live)?;
        let (chi, out) = solve_weighted(&sub, config)?;
        let scale = (2.0f64).powi(-((b - k + 1) as i32));
        for (r, &orig) in row_map.iter().enumerate() {
            bound[orig] += scale * out.report.bound[r];
        }
        for (slot, &j) in live.iter().enumerate() {
            if chi.chi[slot] == 1 {
                v[j] += weight;
            } else {
                v[j] -= weight;
            }
            debug_assert!(v[j] <= full);
        }
        // bit-removal invariant: everything is now a multiple of 2^k
        for (j, &val) in v.iter().enumerate() {
            if val % (1u128 << k) != 0 {
                return Err(Error::contract(format!(
                    "stage {k}: p[{j}] = {val}/2^{b} kept its low bit"
                )));
            }
        }
    }
    let q: Vec<u8> = v.iter().map(|&val| if val == full { 1 } else { 0 }).collect();
    for (j, &val) in v.iter().enumerate() {
        if val != 0 && val != full {
            return Err(Error::contract(format!("p[{j}] did not reach an integer")));
        }
    }

    let p_f = p.to_f64();
    let log_m = hat(m).ln();
    let mut error = Vec::with_capacity(m);
    let mut mu = Vec::with_capacity(m);
    let mut ratio = Vec::with_capacity(m);
    for row in &a.rows {
        let e: f64 = row.iter().map(|&(j, av)| av * (q[j] as f64 - p_f[j])).sum();
        let mu_i: f64 = row.iter().map(|&(j, av)| av * p_f[j]).sum();
        error.push(e.abs());
        mu.push(mu_i);
        ratio.push(e.abs() / ((mu_i.max(0.0) * log_m).sqrt() + log_m));
    }
    let max_ratio = ratio.iter().cloned().fold(0.0, f64::max);
    let certified = error
        .iter()
        .zip(&bound)
        .all(|(&e, &c)| e <= c * (1.0 + 1e-9) + 1e-9);
    if !certified {
        return Err(Error::contract("lattice rounding: stage certificates violated"));
    }
    Ok((q, LatticeReport { error, mu, ratio, bound, stages: b, max_ratio, certified }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_fraction_vector, random_unit_matrix, CounterRng};
    use crate::profile::ConstantsProfile;

    fn config() -> SolveConfig {
        SolveConfig::new(ConstantsProfile::practical())
    }

    #[test]
    fn quantize_half_exact_and_third_nearest() {
        let q = quantize(&[0.5], 4).unwrap();
        assert_eq!(q.values, vec![8]);
        // 1/3 * 16 = 5.33 -> 5/16
        let q = quantize(&[1.0 / 3.0], 4).unwrap();
        assert_eq!(q.values, vec![5]);
        assert!(quantize(&[1.5], 4).is_err());
    }

    #[test]
    fn integral_p_passes_through() {
        let a = WeightedSystem::from_triples(3, 2, &[(0, 0, 1.0), (1, 2, 0.5)]).unwrap();
        let p = quantize(&[0.0, 1.0, 1.0], 8).unwrap();
        let (q, rep) = round_lattice(&a, &p, &config()).unwrap();
        assert_eq!(q, vec![0, 1, 1]);
        assert!(rep.error.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn all_half_identity_matrix() {
        // p = 1/2 everywhere on the identity: one live stage, every row ends
        // exactly 0.5 away
        let n = 4;
        let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|j| vec![(j, 1.0)]).collect();
        let a = WeightedSystem::from_rows(n, rows).unwrap();
        let p = quantize(&vec![0.5; n], 6).unwrap();
        let (q, rep) = round_lattice(&a, &p, &config()).unwrap();
        assert!(q.iter().all(|&x| x == 0 || x == 1));
        for &e in &rep.error {
            assert!((e - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn random_instance_bit_invariant_and_bounds() {
        let rng = CounterRng::new(19);
        let a = random_unit_matrix(64, 8, 24, &rng);
        let p = quantize(&random_fraction_vector(64, &rng), 12).unwrap();
        let (q, rep) = round_lattice(&a, &p, &config()).unwrap();
        assert_eq!(q.len(), 64);
        assert!(rep.certified);
        for (i, &e) in rep.error.iter().enumerate() {
            assert!(e <= rep.bound[i] * (1.0 + 1e-9) + 1e-9, "row {i}");
        }
        // monotone support
        for (j, &x) in p.values.iter().enumerate() {
            if x == 0 {
                assert_eq!(q[j], 0);
            }
            if x == 1 << 12 {
                assert_eq!(q[j], 1);
            }
        }
    }
}
