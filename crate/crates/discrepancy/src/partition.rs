//! Multi-way partitioners.
//!
//! `split2` produces a certified two-way split by balancing the 0/1
//! indicator instance with the potential derandomizer and thresholding on
//! sign. `multiway_unweighted` refines it recursively into `L` parts;
//! `multiway_weighted` reduces squared-mass balancing to the unweighted
//! case by bucketing coefficients of nearly equal magnitude.
//!
//! Every returned certificate is verified against measured intersections
//! before the call returns.

use crate::error::{Error, Result};
use crate::exec;
use crate::instance::{hat, ImportanceVector, Partition, SetSystem, WeightedSystem};
use crate::potential::{seq_derandomize, PotentialParams};
use crate::profile::ConstantsProfile;
use serde::{Deserialize, Serialize};

/// Outcome of a two-way split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitQuality {
    /// Per-set sizes `(|S_i ∩ P_1|, |S_i ∩ P_2|)`.
    pub side_sizes: Vec<(usize, usize)>,
    /// Worst additive deviation from `|S_i| / 2`.
    pub worst_deviation: f64,
    /// Certified per-set deviation bounds.
    pub deviation_bound: Vec<f64>,
    pub k_slack: f64,
}

/// Deterministic two-way partition with per-set deviation at most
/// `tail_coeff * sqrt(|S_i| ln m̂) / 2 + |S_i| / k`.
pub fn split2(
    sys: &SetSystem,
    k: f64,
    profile: &ConstantsProfile,
    m_scale: f64,
) -> Result<(Partition, SplitQuality)> {
    if k < 1.0 {
        return Err(Error::invalid("slack parameter k must be >= 1"));
    }
    let params = PotentialParams {
        m_scale: m_scale.max(hat(sys.m())).max(profile.pot_m_floor),
        tail_coeff: profile.tail_coeff,
        lambda_coeff: profile.lambda_coeff,
    };
    let weighted = sys.to_weighted();
    let (chi, report) = seq_derandomize(&weighted, &ImportanceVector::uniform(sys.m()), params)?;
    let part_of: Vec<usize> = chi.chi.iter().map(|&c| if c == 1 { 0 } else { 1 }).collect();
    let partition = Partition::from_part_of(2, part_of)?;

    let ln_scale = params.m_scale.ln();
    let mut side_sizes = Vec::with_capacity(sys.m());
    let mut deviation_bound = Vec::with_capacity(sys.m());
    let mut worst = 0.0f64;
    for (i, row) in sys.sets.iter().enumerate() {
        let in_first = row.iter().filter(|&&j| partition.part_of[j] == 0).count();
        let s = row.len();
        side_sizes.push((in_first, s - in_first));
        let dev = in_first.max(s - in_first) as f64 - s as f64 / 2.0;
        worst = worst.max(dev);
        let bound = profile.tail_coeff * (s as f64 * ln_scale).sqrt() / 2.0 + s as f64 / k;
        deviation_bound.push(bound);
        // |S ∩ P_1| = (|S| + sdisc) / 2, so the deviation is half the
        // certified discrepancy; check it anyway.
        if dev > bound + 1e-9 {
            return Err(Error::contract(format!(
                "split2: set {i} deviation {dev} exceeds certificate {bound} (disc {})",
                report.disc[i]
            )));
        }
    }
    Ok((partition, SplitQuality { side_sizes, worst_deviation: worst, deviation_bound, k_slack: k }))
}

/// Sound a-priori cap on `|S ∩ part|` after `log2(L)` certified halvings of
/// a set of size `s`.
pub fn composed_count_cap(s: f64, l: usize, tail_coeff: f64, ln_scale: f64, k_slack: f64) -> f64 {
    let mut cap = s;
    let mut parts = l;
    while parts > 1 {
        cap = cap / 2.0 + tail_coeff * (cap.max(0.0) * ln_scale).sqrt() / 2.0 + cap / k_slack;
        parts /= 2;
    }
    cap
}

/// Report accompanying an unweighted multi-way partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnweightedPartitionReport {
    pub l: usize,
    pub epsilon: f64,
    /// Sound per-set caps from composing the split certificates.
    pub count_cap: Vec<f64>,
    /// Measured `max_l |S_i ∩ P_l|` per set.
    pub measured_max: Vec<usize>,
    /// Effective additive constant: the measured slack over `(1+eps)|S_i|/L`,
    /// expressed in units of `ln(m̂)/eps^2`.
    pub additive_constant: f64,
}

/// Partitions `[n]` into `L` parts (a power of two) by recursive halving.
///
/// Guarantees, verified on output: the parts are a disjoint cover and every
/// set satisfies `|S_i ∩ P_l| <= count_cap[i]`, the composition of the
/// per-level split certificates.
pub fn multiway_unweighted(
    sys: &SetSystem,
    l: usize,
    epsilon: f64,
    profile: &ConstantsProfile,
) -> Result<(Partition, UnweightedPartitionReport)> {
    if !l.is_power_of_two() {
        return Err(Error::invalid(format!("part count {l} is not a power of two")));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 0.5]")));
    }
    let m_scale = hat(sys.m());
    // slack chosen so the per-level |S|/k losses stay within epsilon overall
    let k_slack = (2.0 * (l.max(2) as f64).log2() + 2.0) / epsilon;
    let mut part_of = vec![0usize; sys.n];
    let elements: Vec<usize> = (0..sys.n).collect();
    halve(sys, &elements, l, 0, k_slack, profile, m_scale, &mut part_of)?;
    let partition = Partition::from_part_of(l, part_of)?;
    partition.validate()?;

    let ln_scale = m_scale.ln();
    let count_cap: Vec<f64> = sys
        .sets
        .iter()
        .map(|row| composed_count_cap(row.len() as f64, l, profile.tail_coeff, ln_scale, k_slack))
        .collect();
    let measured_max: Vec<usize> = exec::map(&sys.sets, |row| {
        let mut counts = vec![0usize; l];
        for &j in row {
            counts[partition.part_of[j]] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    });
    for (i, (&meas, &cap)) in measured_max.iter().zip(&count_cap).enumerate() {
        if meas as f64 > cap + 1e-9 {
            return Err(Error::contract(format!(
                "multiway: set {i} has part intersection {meas} above composed cap {cap}"
            )));
        }
    }
    let log_m = hat(sys.m()).ln();
    let additive_constant = sys
        .sets
        .iter()
        .zip(&measured_max)
        .map(|(row, &meas)| {
            let ideal = (1.0 + epsilon) * row.len() as f64 / l as f64;
            ((meas as f64 - ideal) * epsilon * epsilon / log_m).max(0.0)
        })
        .fold(0.0, f64::max);
    Ok((
        partition,
        UnweightedPartitionReport { l, epsilon, count_cap, measured_max, additive_constant },
    ))
}

#[allow(clippy::too_many_arguments)]
fn halve(
    sys: &SetSystem,
    elements: &[usize],
    l: usize,
    first_part: usize,
    k_slack: f64,
    profile: &ConstantsProfile,
    m_scale: f64,
    part_of: &mut [usize],
) -> Result<()> {
    if l == 1 {
        for &j in elements {
            part_of[j] = first_part;
        }
        return Ok(());
    }
    let (sub, _rows) = sys.restrict(elements)?;
    let (split, _quality) = split2(&sub, k_slack, profile, m_scale)?;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (local, &j) in elements.iter().enumerate() {
        if split.part_of[local] == 0 {
            left.push(j);
        } else {
            right.push(j);
        }
    }
    // sibling halves are independent; fixed-shape recursion keeps part ids
    // deterministic under any scheduler
    let (lres, rres) = exec::join(
        || {
            let mut lo = vec![0usize; sys.n];
            halve(sys, &left, l / 2, first_part, k_slack, profile, m_scale, &mut lo).map(|_| lo)
        },
        || {
            let mut ro = vec![0usize; sys.n];
            halve(sys, &right, l / 2, first_part + l / 2, k_slack, profile, m_scale, &mut ro)
                .map(|_| ro)
        },
    );
    let (lo, ro) = (lres?, rres?);
    for &j in &left {
        part_of[j] = lo[j];
    }
    for &j in &right {
        part_of[j] = ro[j];
    }
    Ok(())
}

/// Report accompanying a weighted multi-way partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedPartitionReport {
    pub l: usize,
    pub epsilon: f64,
    /// Sound per-row caps on per-part squared mass.
    pub mass_cap: Vec<f64>,
    /// Measured `max_l sum_{j in P_l} a_ij^2` per row.
    pub measured_mass_max: Vec<f64>,
    /// Measured worst part cardinality.
    pub max_part_size: usize,
    /// Measured per-row worst part support count.
    pub measured_support_max: Vec<usize>,
    /// Largest bucket magnitude ratio observed (must stay <= 1/(1 - eps/3)).
    pub worst_bucket_ratio: f64,
}

/// Partitions `[n]` into `L` parts balancing per-row squared mass:
/// coefficients are bucketed at ratio `1 - eps/3`, buckets are balanced by
/// cardinality, and per-part mass caps compose bucket counts with bucket
/// value ceilings.
pub fn multiway_weighted(
    sys: &WeightedSystem,
    l: usize,
    epsilon: f64,
    profile: &ConstantsProfile,
) -> Result<(Partition, WeightedPartitionReport)> {
    if !l.is_power_of_two() {
        return Err(Error::invalid(format!("part count {l} is not a power of two")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1]")));
    }
    let a_max_sq = sys.max_abs().powi(2);
    let n = sys.n;
    // family: [n], per-row supports, then per-row nonempty buckets
    let mut family: Vec<Vec<usize>> = vec![(0..n).collect()];
    for row in &sys.rows {
        family.push(row.iter().map(|&(j, _)| j).collect());
    }
    let decay = 1.0 - epsilon / 3.0;
    let k_max = (10.0 * ((n + 1) as f64).ln() / epsilon).ceil() as i64;
    // (row, bucket) -> family index, in deterministic order
    let mut bucket_of: Vec<Vec<(i64, Vec<usize>)>> = Vec::with_capacity(sys.m);
    let mut worst_bucket_ratio = 1.0f64;
    if a_max_sq > 0.0 {
        for row in &sys.rows {
            let mut buckets: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
            for &(j, a) in row {
                let sq = a * a;
                if sq == 0.0 {
                    continue;
                }
                // largest k with sq <= decay^k * a_max_sq
                let k = ((sq / a_max_sq).ln() / decay.ln()).floor().max(0.0) as i64;
                if k <= k_max {
                    buckets.entry(k).or_default().push(j);
                }
            }
            bucket_of.push(buckets.into_iter().collect());
        }
        for (i, buckets) in bucket_of.iter().enumerate() {
            for (_, members) in buckets {
                let vals: Vec<f64> = members
                    .iter()
                    .map(|&j| {
                        let idx = sys.rows[i].binary_search_by_key(&j, |&(c, _)| c).unwrap();
                        sys.rows[i][idx].1.abs()
                    })
                    .collect();
                let hi = vals.iter().cloned().fold(0.0, f64::max);
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                if lo > 0.0 {
                    worst_bucket_ratio = worst_bucket_ratio.max(hi / lo);
                }
                family.push(members.clone());
            }
        }
        let ratio_cap = 1.0 / decay;
        if worst_bucket_ratio > ratio_cap + 1e-9 {
            return Err(Error::contract(format!(
                "bucket magnitude ratio {worst_bucket_ratio} above {ratio_cap}"
            )));
        }
    }
    let fam_sys = SetSystem::new(n, family)?;
    let (partition, unw) = multiway_unweighted(&fam_sys, l, epsilon / 3.0, profile)?;

    // per-row sound mass cap: bucket count caps times bucket ceilings, plus
    // the below-threshold residue
    let residue = if a_max_sq > 0.0 {
        n as f64 * decay.powi(k_max as i32 + 1) * a_max_sq
    } else {
        0.0
    };
    let mut mass_cap = vec![residue; sys.m];
    if a_max_sq > 0.0 {
        let mut fam_idx = 1 + sys.m;
        for (i, buckets) in bucket_of.iter().enumerate() {
            for (k, _) in buckets {
                mass_cap[i] += unw.count_cap[fam_idx] * decay.powi(*k as i32) * a_max_sq;
                fam_idx += 1;
            }
        }
    }

    // measured quantities
    let measured: Vec<(f64, usize)> = exec::map_idx(sys.m, |i| {
        let mut mass = vec![0.0f64; l];
        let mut supp = vec![0usize; l];
        for &(j, a) in &sys.rows[i] {
            let t = partition.part_of[j];
            mass[t] += a * a;
            if a != 0.0 {
                supp[t] += 1;
            }
        }
        (
            mass.into_iter().fold(0.0, f64::max),
            supp.into_iter().max().unwrap_or(0),
        )
    });
    let measured_mass_max: Vec<f64> = measured.iter().map(|&(m, _)| m).collect();
    let measured_support_max: Vec<usize> = measured.iter().map(|&(_, s)| s).collect();
    for (i, (&meas, &cap)) in measured_mass_max.iter().zip(&mass_cap).enumerate() {
        if meas > cap * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::contract(format!(
                "weighted multiway: row {i} part mass {meas} above cap {cap}"
            )));
        }
    }
    let max_part_size = partition.parts.iter().map(Vec::len).max().unwrap_or(0);
    Ok((
        partition,
        WeightedPartitionReport {
            l,
            epsilon,
            mass_cap,
            measured_mass_max,
            max_part_size,
            measured_support_max,
            worst_bucket_ratio,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_set_system, random_weighted_system, CounterRng, WeightKind};

    fn profile() -> ConstantsProfile {
        ConstantsProfile::practical()
    }

    #[test]
    fn split2_cancels_a_pair() {
        let sys = SetSystem::new(2, vec![vec![0, 1]]).unwrap();
        let (p, q) = split2(&sys, 10.0, &profile(), 2.0).unwrap();
        assert_eq!(p.parts[0].len(), 1);
        assert_eq!(p.parts[1].len(), 1);
        assert_eq!(q.side_sizes[0], (1, 1));
        assert_eq!(q.worst_deviation, 0.0);
    }

    #[test]
    fn split2_singleton_ground_set() {
        let sys = SetSystem::new(1, vec![vec![0]]).unwrap();
        let (p, q) = split2(&sys, 10.0, &profile(), 2.0).unwrap();
        assert_eq!(p.parts[0].len() + p.parts[1].len(), 1);
        assert_eq!(q.worst_deviation, 0.5);
        assert!(q.worst_deviation <= q.deviation_bound[0]);
    }

    #[test]
    fn split2_random_sets_within_certificate() {
        let rng = CounterRng::new(4);
        let sys = random_set_system(40, 6, 18, &rng);
        let (_, q) = split2(&sys, 10.0, &profile(), hat(6)).unwrap();
        for (i, &(a, b)) in q.side_sizes.iter().enumerate() {
            let dev = a.max(b) as f64 - (a + b) as f64 / 2.0;
            assert!(dev <= q.deviation_bound[i] + 1e-9, "set {i}");
        }
    }

    #[test]
    fn multiway_identity_partition() {
        let sys = SetSystem::new(5, vec![vec![0, 4]]).unwrap();
        let (p, _) = multiway_unweighted(&sys, 1, 0.5, &profile()).unwrap();
        assert_eq!(p.num_parts, 1);
        assert_eq!(p.parts[0], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn multiway_small_full_set() {
        let sys = SetSystem::new(4, vec![vec![0, 1, 2, 3]]).unwrap();
        let (p, rep) = multiway_unweighted(&sys, 4, 0.5, &profile()).unwrap();
        p.validate().unwrap();
        assert!(rep.measured_max[0] as f64 <= rep.count_cap[0] + 1e-9);
    }

    #[test]
    fn multiway_disjoint_cover_and_caps() {
        let rng = CounterRng::new(8);
        let sys = random_set_system(256, 10, 64, &rng);
        let (p, rep) = multiway_unweighted(&sys, 8, 0.25, &profile()).unwrap();
        p.validate().unwrap();
        for (i, &meas) in rep.measured_max.iter().enumerate() {
            assert!(meas as f64 <= rep.count_cap[i] + 1e-9, "set {i}");
        }
        assert!(multiway_unweighted(&sys, 3, 0.25, &profile()).is_err());
    }

    #[test]
    fn weighted_uniform_degenerates_to_support() {
        // all |a_ij| equal: a single bucket per row, mass cap = count cap * a^2
        let rows = vec![vec![(0usize, 2.0), (1, -2.0), (2, 2.0), (3, -2.0)]];
        let sys = WeightedSystem::from_rows(4, rows).unwrap();
        let (p, rep) = multiway_weighted(&sys, 2, 1.0, &profile()).unwrap();
        p.validate().unwrap();
        assert!((rep.worst_bucket_ratio - 1.0).abs() < 1e-12);
        assert!(rep.measured_mass_max[0] <= rep.mass_cap[0] + 1e-9);
    }

    #[test]
    fn weighted_two_scales_certified() {
        let rows = vec![vec![(0usize, 4.0), (1, 1.0)]];
        let sys = WeightedSystem::from_rows(2, rows).unwrap();
        let (p, rep) = multiway_weighted(&sys, 2, 1.0, &profile()).unwrap();
        p.validate().unwrap();
        assert!(rep.measured_mass_max[0] <= rep.mass_cap[0] + 1e-9);
        assert!(rep.measured_support_max[0] <= 2);
    }

    #[test]
    fn weighted_dynamic_range_all_bullets() {
        let rng = CounterRng::new(77);
        let sys = random_weighted_system(64, 8, 32, WeightKind::LogNormal, &rng);
        let (p, rep) = multiway_weighted(&sys, 4, 0.5, &profile()).unwrap();
        p.validate().unwrap();
        let decay = 1.0 - 0.5 / 3.0;
        assert!(rep.worst_bucket_ratio <= 1.0 / decay + 1e-9);
        for i in 0..sys.m {
            assert!(rep.measured_mass_max[i] <= rep.mass_cap[i] * (1.0 + 1e-9), "row {i}");
        }
    }

    #[test]
    fn weighted_zero_matrix_gets_size_balanced_parts() {
        let sys = WeightedSystem::from_rows(8, vec![vec![]]).unwrap();
        let (p, _) = multiway_weighted(&sys, 4, 1.0, &profile()).unwrap();
        p.validate().unwrap();
        assert_eq!(p.num_parts, 4);
        // the full-ground-set family row keeps sizes balanced
        assert!(p.parts.iter().all(|part| part.len() <= 4));
    }
}
