//! Derandomization over a pairwise-independent sign space.
//!
//! Element `j` is encoded as the nonzero bit-vector `j + 1`; a `k`-bit seed
//! induces `chi_j = (-1)^{<seed, j+1>}`. Over all `2^k` seeds each
//! coordinate is uniform and every pair of coordinates is independent, so
//! the seed-space mean of `sum_i imp(i) sdisc(S_i)^2` equals
//! `sum_i imp(i) |S_i|` exactly. Exhaustively searching the (linear-size)
//! seed space therefore finds an assignment at most that mean.

use crate::error::Result;
use crate::exec;
use crate::instance::{Assignment, ImportanceVector, SetSystem};

/// The seed space: `k = ceil(log2(n + 1))` bits.
#[derive(Debug, Clone, Copy)]
pub struct PairwiseSpace {
    pub n: usize,
    pub seed_bits: u32,
}

impl PairwiseSpace {
    pub fn new(n: usize) -> Self {
        let seed_bits = usize::BITS - n.leading_zeros(); // ceil(log2(n+1))
        PairwiseSpace { n, seed_bits }
    }

    pub fn num_seeds(&self) -> u64 {
        1u64 << self.seed_bits
    }

    /// `chi_j = (-1)^{parity(seed & (j+1))}`.
    pub fn chi_from_seed(&self, seed: u64) -> Assignment {
        debug_assert!(seed < self.num_seeds());
        let chi = (0..self.n)
            .map(|j| {
                let bits = seed & (j as u64 + 1);
                if bits.count_ones().is_multiple_of(2) {
                    1
                } else {
                    -1
                }
            })
            .collect();
        Assignment { chi }
    }
}

/// Weighted second-moment objective of a seed, plus per-set signed sums.
fn seed_objective(sys: &SetSystem, imp: &[f64], _space: &PairwiseSpace, seed: u64) -> f64 {
    let mut obj = 0.0;
    for (row, &w) in sys.sets.iter().zip(imp) {
        let mut s: i64 = 0;
        for &j in row {
            let bits = seed & (j as u64 + 1);
            s += 1 - 2 * (bits.count_ones() as i64 & 1);
        }
        obj += w * (s * s) as f64;
    }
    obj
}

/// Exhaustive search over the seed space for the assignment minimizing
/// `sum_i imp(i) sdisc(S_i)^2`. Ties break toward the smallest seed, and the
/// minimum is at most `sum_i imp(i) |S_i|` (the seed-space mean).
pub fn pairwise_balance(sys: &SetSystem, imp: &ImportanceVector) -> Result<(Assignment, u64)> {
    debug_assert_eq!(imp.imp.len(), sys.m());
    let space = PairwiseSpace::new(sys.n);
    if sys.n == 0 {
        return Ok((Assignment { chi: vec![] }, 0));
    }
    let seeds = space.num_seeds() as usize;
    // (objective, seed) pairs compare lexicographically: smallest seed wins ties
    let best = exec::argmin_by_key(seeds, |s| {
        (seed_objective(sys, &imp.imp, &space, s as u64), s)
    }) as u64;
    Ok((space.chi_from_seed(best), best))
}

/// Seed-space mean of the weighted objective; equals `sum_i imp(i) |S_i|`.
pub fn seed_space_mean(sys: &SetSystem, imp: &[f64]) -> f64 {
    sys.sets
        .iter()
        .zip(imp)
        .map(|(row, &w)| w * row.len() as f64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_set_system, CounterRng};
    use crate::instance::evaluate_sets;

    #[test]
    fn seed_zero_is_all_ones() {
        let space = PairwiseSpace::new(5);
        assert_eq!(space.chi_from_seed(0).chi, vec![1; 5]);
    }

    #[test]
    fn small_seed_hand_check() {
        // n = 3, k = 2, seed = 0b01: chi_j = (-1)^{low bit of j+1}
        let space = PairwiseSpace::new(3);
        assert_eq!(space.seed_bits, 2);
        let chi = space.chi_from_seed(0b01);
        assert_eq!(chi.chi, vec![-1, 1, -1]); // j+1 = 1, 2, 3
    }

    #[test]
    fn each_coordinate_balanced_over_seeds() {
        for n in 1..=9usize {
            let space = PairwiseSpace::new(n);
            let mut plus = vec![0u64; n];
            for seed in 0..space.num_seeds() {
                let chi = space.chi_from_seed(seed);
                for j in 0..n {
                    if chi.chi[j] == 1 {
                        plus[j] += 1;
                    }
                }
            }
            assert!(plus.iter().all(|&c| c == space.num_seeds() / 2), "n = {n}: {plus:?}");
        }
    }

    #[test]
    fn singleton_meets_bound_with_equality() {
        let sys = SetSystem::new(1, vec![vec![0]]).unwrap();
        let imp = ImportanceVector::uniform(1);
        let (chi, _) = pairwise_balance(&sys, &imp).unwrap();
        let s = evaluate_sets(&sys, &chi).unwrap()[0];
        assert_eq!(s * s, 1);
    }

    #[test]
    fn pair_cancels() {
        let sys = SetSystem::new(2, vec![vec![0, 1]]).unwrap();
        let (chi, _) = pairwise_balance(&sys, &ImportanceVector::uniform(1)).unwrap();
        let s = evaluate_sets(&sys, &chi).unwrap()[0];
        assert_eq!(s, 0);
    }

    /// Exact integer seed-space identity: sum over seeds of sdisc^2 equals
    /// 2^k |S_i| for every set.
    #[test]
    fn seed_space_identity_exact() {
        let rng = CounterRng::new(21);
        for trial in 0..12 {
            let n = 2 + (trial as usize % 11);
            let sys = random_set_system(n, 5, 1 + trial as usize % n.max(1), &rng.derive(trial));
            let space = PairwiseSpace::new(n);
            for row in &sys.sets {
                let mut total: i64 = 0;
                for seed in 0..space.num_seeds() {
                    let chi = space.chi_from_seed(seed);
                    let s: i64 = row.iter().map(|&j| chi.chi[j] as i64).sum();
                    total += s * s;
                }
                assert_eq!(total, space.num_seeds() as i64 * row.len() as i64);
            }
        }
    }

    #[test]
    fn minimum_matches_independent_sweep_and_beats_mean() {
        let rng = CounterRng::new(33);
        let sys = random_set_system(12, 5, 6, &rng);
        let imp = ImportanceVector::new((0..5).map(|i| 0.25 + rng.f64(i)).collect()).unwrap();
        let (chi, seed) = pairwise_balance(&sys, &imp).unwrap();
        // independent oracle: sequential full sweep, first minimum kept
        let space = PairwiseSpace::new(sys.n);
        let mut best = (f64::INFINITY, u64::MAX);
        for s in 0..space.num_seeds() {
            let cand = space.chi_from_seed(s);
            let obj: f64 = sys
                .sets
                .iter()
                .zip(&imp.imp)
                .map(|(row, &w)| {
                    let d: i64 = row.iter().map(|&j| cand.chi[j] as i64).sum();
                    w * (d * d) as f64
                })
                .sum();
            if obj < best.0 {
                best = (obj, s);
            }
        }
        assert_eq!(seed, best.1);
        let got: f64 = sys
            .sets
            .iter()
            .zip(&imp.imp)
            .map(|(row, &w)| {
                let d: i64 = row.iter().map(|&j| chi.chi[j] as i64).sum();
                w * (d * d) as f64
            })
            .sum();
        assert!((got - best.0).abs() < 1e-12);
        assert!(got <= seed_space_mean(&sys, &imp.imp) * (1.0 + 1e-12));
    }
}
