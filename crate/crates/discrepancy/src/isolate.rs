//! Isolation partitioning for weighted instances.
//!
//! Produces a coarse partition that splits every "big" set evenly and a fine
//! refinement in which the elements of every "small" set are almost fully
//! isolated (at most one per fine part, up to an exponentially penalized
//! excess). The chain: a pessimistic-estimator subset selector, a greedy
//! collision partitioner driven by an exact-martingale potential, chunking,
//! round-wise sampling of a shrinking residue, and finally the two-level
//! partition with importance chaining across coarse parts.
//!
//! Every inequality promised by a stage is re-measured on its output before
//! the stage returns.

use crate::error::{Error, Result};
use crate::exec;
use crate::instance::{hat, Partition, SetSystem};
use crate::partition::multiway_unweighted;
use crate::profile::ConstantsProfile;
use serde::{Deserialize, Serialize};

/// A deviation-tracked constraint for [`subset_select`]:
/// keep `| |R_sub ∩ S| - p |S| | <= delta` or pay `imp` into the bad budget.
#[derive(Debug, Clone)]
pub struct Triple {
    pub set: Vec<usize>,
    pub delta: f64,
    pub imp: f64,
}

/// Outcome of the pessimistic-estimator selection.
#[derive(Debug, Clone)]
pub struct SubsetSelection {
    pub selected: Vec<usize>,
    /// Indexes of triples whose estimators ended at `u + l >= 1`.
    pub bad: Vec<usize>,
    /// `sum_C imp(C) (u0_C + l0_C)`: the self-certifying bad-importance cap.
    pub certificate: f64,
    /// Final potential (never exceeds the certificate).
    pub final_potential: f64,
}

struct Estimator {
    log_u: f64,
    log_l: f64,
    // per-step log increments
    up_inc: f64,
    up_exc: f64,
    low_inc: f64,
    low_exc: f64,
}

impl Estimator {
    fn new(p: f64, size: f64, delta: f64) -> Self {
        let lambda = (1.0 + delta / (2.0 * (p * size).max(1.0))).ln().min(1.0);
        // upper: P[X >= p s + delta] <= e^{-l (ps+delta)} (1-p+p e^l)^s
        let up_base = (1.0 - p + p * lambda.exp()).ln();
        let log_u = -lambda * (p * size + delta) + size * up_base;
        // lower: P[X <= p s - delta] <= e^{l (ps-delta)} (1-p+p e^-l)^s
        let low_base = (1.0 - p + p * (-lambda).exp()).ln();
        let log_l = lambda * (p * size - delta) + size * low_base;
        Estimator {
            log_u,
            log_l,
            up_inc: lambda - up_base,
            up_exc: -up_base,
            low_inc: -lambda - low_base,
            low_exc: -low_base,
        }
    }

    fn lin_u(&self) -> f64 {
        self.log_u.min(700.0).exp()
    }

    fn lin_l(&self) -> f64 {
        self.log_l.min(700.0).exp()
    }

    fn value(&self) -> f64 {
        self.lin_u() + self.lin_l()
    }
}

/// Deterministic stand-in for sampling each element of `R` with rate `p`:
/// one exponential pessimistic estimator per tail per triple, advanced by
/// conditional expectation with deterministic branching. The total potential
/// is an exact martingale under the Bernoulli(p) reference measure, so
/// `sum_{bad} imp <= certificate` always holds.
pub fn subset_select(r: &[usize], p: f64, triples: &[Triple]) -> Result<SubsetSelection> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("rate p = {p} outside (0, 1]")));
    }
    for (c, t) in triples.iter().enumerate() {
        if t.delta < 0.5 * p * t.set.len() as f64 - 1e-12 {
            return Err(Error::contract(format!(
                "triple {c}: delta {} below 0.5 p |S| = {}",
                t.delta,
                0.5 * p * t.set.len() as f64
            )));
        }
        if !(t.imp >= 0.0 && t.imp.is_finite()) {
            return Err(Error::contract(format!("triple {c}: bad importance")));
        }
    }
    if p == 1.0 {
        let certificate = triples
            .iter()
            .map(|t| t.imp * Estimator::new(p, t.set.len() as f64, t.delta).value())
            .sum();
        return Ok(SubsetSelection {
            selected: r.to_vec(),
            bad: Vec::new(),
            certificate,
            final_potential: 0.0,
        });
    }

    // element -> triples touching it (within R)
    let mut in_r = std::collections::BTreeMap::new();
    for (slot, &j) in r.iter().enumerate() {
        in_r.insert(j, slot);
    }
    let mut touched: Vec<Vec<usize>> = vec![Vec::new(); r.len()];
    let mut est: Vec<Estimator> = Vec::with_capacity(triples.len());
    for (c, t) in triples.iter().enumerate() {
        let mut members = 0usize;
        for j in &t.set {
            if let Some(&slot) = in_r.get(j) {
                touched[slot].push(c);
                members += 1;
            }
        }
        if members != t.set.len() {
            return Err(Error::contract(format!("triple {c}: set not contained in R")));
        }
        est.push(Estimator::new(p, t.set.len() as f64, t.delta));
    }
    let certificate: f64 = triples.iter().zip(&est).map(|(t, e)| t.imp * e.value()).sum();

    let mut selected = Vec::new();
    for (slot, &j) in r.iter().enumerate() {
        // potential deltas of the two branches over touched triples
        let mut d_inc = 0.0;
        let mut d_exc = 0.0;
        for &c in &touched[slot] {
            let e = &est[c];
            let (u, l) = (e.lin_u(), e.lin_l());
            d_inc += triples[c].imp * (u * (e.up_inc.exp() - 1.0) + l * (e.low_inc.exp() - 1.0));
            d_exc += triples[c].imp * (u * (e.up_exc.exp() - 1.0) + l * (e.low_exc.exp() - 1.0));
        }
        let include = d_inc <= d_exc;
        if include {
            selected.push(j);
        }
        for &c in &touched[slot] {
            let e = &mut est[c];
            if include {
                e.log_u += e.up_inc;
                e.log_l += e.low_inc;
            } else {
                e.log_u += e.up_exc;
                e.log_l += e.low_exc;
            }
        }
    }

    let final_potential: f64 = triples.iter().zip(&est).map(|(t, e)| t.imp * e.value()).sum();
    let bad: Vec<usize> = est
        .iter()
        .enumerate()
        .filter(|(_, e)| e.value() >= 1.0)
        .map(|(c, _)| c)
        .collect();
    let bad_imp: f64 = bad.iter().map(|&c| triples[c].imp).sum();
    if bad_imp > certificate * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::contract(format!(
            "bad importance {bad_imp} exceeds self-certificate {certificate}"
        )));
    }
    // non-bad triples really did stay within their allowance
    let sel_set: std::collections::BTreeSet<usize> = selected.iter().copied().collect();
    for (c, t) in triples.iter().enumerate() {
        if bad.contains(&c) {
            continue;
        }
        let hit = t.set.iter().filter(|j| sel_set.contains(j)).count() as f64;
        let dev = (hit - p * t.set.len() as f64).abs();
        if dev > t.delta + 1e-9 {
            return Err(Error::contract(format!(
                "triple {c} marked good but deviates by {dev} > {}",
                t.delta
            )));
        }
    }
    Ok(SubsetSelection { selected, bad, certificate, final_potential })
}

/// Report from [`pick_sparse_subset`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PickReport {
    pub k_used: usize,
    pub retries: usize,
    /// Measured `|R_sub| * K / |R|`.
    pub density_constant: f64,
}

/// Picks `R_sub` with `|R_sub| = Omega(|R| / K)` such that
/// `sum_i imp_i (1 + delta)^{max(0, |R_sub ∩ S_i| - 1)} <= 2 sum_i imp_i`.
/// `sets` must already be restricted to `r` and have size at most `k`.
pub fn pick_sparse_subset(
    r: &[usize],
    k: usize,
    sets: &[Vec<usize>],
    imps: &[f64],
    profile: &ConstantsProfile,
) -> Result<(Vec<usize>, PickReport)> {
    let delta_p = 0.25; // the selector's internal decay constant
    let k = k.max(1);
    let total_imp: f64 = imps.iter().sum();
    let mut k_eff = k;
    for attempt in 0..4 {
        if r.len() as f64 <= k_eff as f64 / delta_p {
            // small-residue branch: a singleton (or everything) is enough
            let selected = if r.len() <= 1 { r.to_vec() } else { vec![r[0]] };
            return Ok((
                selected,
                PickReport {
                    k_used: k_eff,
                    retries: attempt,
                    density_constant: k_eff as f64 / r.len().max(1) as f64,
                },
            ));
        }
        let p = 1.0 / (1.1 * k_eff as f64);
        let mut triples = Vec::new();
        for (set, &imp) in sets.iter().zip(imps) {
            if set.is_empty() {
                continue;
            }
            for dev in 1..=k_eff {
                triples.push(Triple {
                    set: set.clone(),
                    delta: dev as f64,
                    imp: imp * (1.0 + delta_p).powi(dev as i32),
                });
            }
        }
        triples.push(Triple {
            set: r.to_vec(),
            delta: 0.5 * r.len() as f64 / k_eff as f64,
            imp: (10.0 / delta_p) * total_imp,
        });
        let sel = subset_select(r, p, &triples)?;
        let r_sub = if sel.selected.is_empty() { vec![r[0]] } else { sel.selected };

        // verify both promised bounds before accepting
        let sub: std::collections::BTreeSet<usize> = r_sub.iter().copied().collect();
        let lhs: f64 = sets
            .iter()
            .zip(imps)
            .map(|(set, &imp)| {
                let hits = set.iter().filter(|j| sub.contains(j)).count();
                imp * (1.0 + profile.delta).powi(hits.saturating_sub(1) as i32)
            })
            .sum();
        let size_ok = r_sub.len() as f64 >= 0.05 * r.len() as f64 / k_eff as f64;
        if lhs <= 2.0 * total_imp * (1.0 + 1e-9) && size_ok {
            let density = r_sub.len() as f64 * k_eff as f64 / r.len() as f64;
            return Ok((
                r_sub,
                PickReport { k_used: k_eff, retries: attempt, density_constant: density },
            ));
        }
        // sparser retry: a larger K lowers the selection rate, which can only
        // reduce collisions
        k_eff *= 2;
    }
    Err(Error::contract(
        "pick_sparse_subset: selection bounds failed after 3 sparser retries",
    ))
}

/// Report from [`collision_partition`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionReport {
    pub t: usize,
    /// `sum_S imp_S sum_t C(|S ∩ Q_t|, 2)`.
    pub weighted_collisions: f64,
    /// Its certified cap `(2/T) sum_S imp_S C(|S|, 2)`.
    pub collision_cap: f64,
    pub max_part_size: usize,
    /// Part-size cap implied by the potential: `1 + log2 T + 2 |R| / T`.
    pub size_cap: f64,
}

fn choose2(x: usize) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Collision potential of a prefix assignment `rho` (element slot -> part),
/// recomputed from scratch. Companion oracle for [`collision_partition`]:
/// assigning the next slot to a uniformly random part keeps its expectation
/// unchanged, and the greedy never lets it grow.
pub fn collision_phi(r: &[usize], t: usize, pairs: &[(Vec<usize>, f64)], rho: &[usize]) -> f64 {
    let ell = rho.len();
    let assigned: std::collections::BTreeMap<usize, usize> =
        r.iter().take(ell).copied().zip(rho.iter().copied()).collect();
    let prefix: std::collections::BTreeSet<usize> = r.iter().take(ell).copied().collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (set, imp) in pairs {
        if set.len() < 2 {
            continue;
        }
        let mut counts = vec![0usize; t];
        let mut in_prefix = 0usize;
        for j in set {
            if let Some(&part) = assigned.get(j) {
                counts[part] += 1;
            }
            if prefix.contains(j) {
                in_prefix += 1;
            }
        }
        let phi_s: f64 = counts.iter().map(|&c| choose2(c)).sum::<f64>()
            + (choose2(set.len()) - choose2(in_prefix)) / t as f64;
        num += imp * phi_s;
        den += imp * choose2(set.len()) / t as f64;
    }
    let set_term = if den > 0.0 { num / den } else { 1.0 };
    let mut part_term = 0.0;
    let decay = (1.0 + 1.0 / t as f64).powi(-(ell as i32));
    let mut sizes = vec![0usize; t];
    for &part in rho {
        sizes[part] += 1;
    }
    for &s in &sizes {
        part_term += (2.0f64).powi(s as i32) * decay;
    }
    set_term + part_term / t as f64
}

/// Greedy collision partitioner: assigns the elements of `r` one at a time
/// to the part minimizing the collision potential. On output,
/// `sum imp_S sum_t C(|S ∩ Q_t|, 2) <= (2/T) sum imp_S C(|S|, 2)` and every
/// part obeys the potential size cap.
pub fn collision_partition(
    r: &[usize],
    t: usize,
    pairs: &[(Vec<usize>, f64)],
) -> Result<(Vec<Vec<usize>>, CollisionReport)> {
    if t == 0 {
        return Err(Error::invalid("need at least one part"));
    }
    let cap_total: f64 = pairs.iter().map(|(s, imp)| imp * choose2(s.len())).sum();
    if t >= r.len() {
        let parts: Vec<Vec<usize>> = r.iter().map(|&j| vec![j]).collect();
        return Ok((
            parts,
            CollisionReport {
                t: r.len().max(1),
                weighted_collisions: 0.0,
                collision_cap: 2.0 * cap_total / t as f64,
                max_part_size: usize::from(!r.is_empty()),
                size_cap: 1.0 + (t as f64).log2() + 2.0 * r.len() as f64 / t as f64,
            },
        ));
    }

    let slot_of: std::collections::BTreeMap<usize, usize> =
        r.iter().enumerate().map(|(s, &j)| (j, s)).collect();
    // only sets with >= 2 members and positive weight matter
    let live: Vec<(Vec<usize>, f64)> = pairs
        .iter()
        .filter(|(s, imp)| s.len() >= 2 && *imp > 0.0)
        .cloned()
        .collect();
    let mut touched: Vec<Vec<usize>> = vec![Vec::new(); r.len()];
    for (c, (set, _)) in live.iter().enumerate() {
        for j in set {
            let &slot = slot_of
                .get(j)
                .ok_or_else(|| Error::contract("pair set not contained in R"))?;
            touched[slot].push(c);
        }
    }
    let a0: f64 = live.iter().map(|(s, imp)| imp * choose2(s.len())).sum::<f64>() / t as f64;
    let mut counts: Vec<std::collections::BTreeMap<usize, usize>> =
        vec![Default::default(); live.len()];
    let mut sizes = vec![0usize; t];
    // parts ordered by (occupancy, index): the head is the best empty-score part
    let mut order: std::collections::BTreeSet<(usize, usize)> =
        (0..t).map(|part| (0usize, part)).collect();

    let mut assignment = vec![0usize; r.len()];
    for slot in 0..r.len() {
        let beta = (1.0 + 1.0 / t as f64).powi(-(slot as i32 + 1)) / t as f64;
        // candidate parts: those already holding a co-member, plus the
        // least-occupied part among the rest (no co-member penalty there, so
        // it dominates all other empty-of-co-members parts)
        let mut cands: Vec<usize> = Vec::new();
        for &c in &touched[slot] {
            for &part in counts[c].keys() {
                cands.push(part);
            }
        }
        cands.sort_unstable();
        cands.dedup();
        let co_parts = cands.clone();
        if let Some(&(_, free)) = order.iter().find(|&&(_, part)| co_parts.binary_search(&part).is_err())
        {
            cands.push(free);
        }
        let mut best = (f64::INFINITY, usize::MAX);
        for &part in &cands {
            let mut score = beta * (2.0f64).powi(sizes[part] as i32);
            if a0 > 0.0 {
                let co: f64 = touched[slot]
                    .iter()
                    .map(|&c| live[c].1 * *counts[c].get(&part).unwrap_or(&0) as f64)
                    .sum();
                score += co / a0;
            }
            if (score, part) < best {
                best = (score, part);
            }
        }
        let part = best.1;
        assignment[slot] = part;
        order.remove(&(sizes[part], part));
        sizes[part] += 1;
        order.insert((sizes[part], part));
        for &c in &touched[slot] {
            *counts[c].entry(part).or_insert(0) += 1;
        }
    }

    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); t];
    for (slot, &part) in assignment.iter().enumerate() {
        parts[part].push(r[slot]);
    }
    let weighted_collisions: f64 = live
        .iter()
        .zip(&counts)
        .map(|((_, imp), cnt)| imp * cnt.values().map(|&c| choose2(c)).sum::<f64>())
        .sum();
    let collision_cap = 2.0 / t as f64 * cap_total;
    if weighted_collisions > collision_cap * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::contract(format!(
            "collision sum {weighted_collisions} exceeds cap {collision_cap}"
        )));
    }
    let max_part_size = sizes.iter().copied().max().unwrap_or(0);
    let size_cap = 1.0 + (t as f64).log2() + 2.0 * r.len() as f64 / t as f64;
    if max_part_size as f64 > size_cap + 1e-9 {
        return Err(Error::contract(format!(
            "part size {max_part_size} exceeds potential cap {size_cap}"
        )));
    }
    Ok((
        parts,
        CollisionReport { t, weighted_collisions, collision_cap, max_part_size, size_cap },
    ))
}

/// Report from [`chunked_collision_partition`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkedReport {
    pub chunks: usize,
    pub parts: usize,
    /// `sum_i imp_i sum_t max(|Q_t ∩ S_i| - 1, 0)`.
    pub weighted_excess: f64,
    pub max_part_size: usize,
    pub size_cap: f64,
}

/// Splits `r_sub` into chunks of profile-bounded size and runs the collision
/// greedy in each chunk with `T = max(2, floor(|chunk| / 100))` parts;
/// undersized inputs fall back to singletons.
pub fn chunked_collision_partition(
    r_sub: &[usize],
    k: usize,
    sets: &[Vec<usize>],
    imps: &[f64],
    profile: &ConstantsProfile,
) -> Result<(Vec<Vec<usize>>, ChunkedReport)> {
    let chunk_min = profile.collision_chunk_min(k.max(2));
    let mut parts: Vec<Vec<usize>> = Vec::new();
    let chunks;
    let mut max_part_size = 0usize;
    let mut size_cap = 1.0f64;
    if r_sub.len() <= chunk_min {
        parts.extend(r_sub.iter().map(|&j| vec![j]));
        max_part_size = usize::from(!r_sub.is_empty());
        chunks = usize::from(!r_sub.is_empty());
    } else {
        let num_chunks = (r_sub.len() / chunk_min).max(1);
        let base = r_sub.len() / num_chunks;
        let extra = r_sub.len() % num_chunks;
        let mut bounds = Vec::new();
        let mut start = 0usize;
        for c in 0..num_chunks {
            let len = base + usize::from(c < extra);
            bounds.push((start, start + len));
            start += len;
        }
        chunks = num_chunks;
        let results: Vec<Result<(Vec<Vec<usize>>, CollisionReport)>> =
            exec::map(&bounds, |&(lo, hi)| {
                let chunk = &r_sub[lo..hi];
                let members: std::collections::BTreeSet<usize> = chunk.iter().copied().collect();
                let pairs: Vec<(Vec<usize>, f64)> = sets
                    .iter()
                    .zip(imps)
                    .filter_map(|(set, &imp)| {
                        let inter: Vec<usize> =
                            set.iter().copied().filter(|j| members.contains(j)).collect();
                        (inter.len() >= 2).then_some((inter, imp))
                    })
                    .collect();
                let t = (chunk.len() / 100).max(2);
                collision_partition(chunk, t, &pairs)
            });
        for res in results {
            let (chunk_parts, rep) = res?;
            max_part_size = max_part_size.max(rep.max_part_size);
            size_cap = size_cap.max(rep.size_cap);
            parts.extend(chunk_parts.into_iter().filter(|p| !p.is_empty()));
        }
    }
    let part_of: std::collections::BTreeMap<usize, usize> = parts
        .iter()
        .enumerate()
        .flat_map(|(t, p)| p.iter().map(move |&j| (j, t)))
        .collect();
    let weighted_excess: f64 = sets
        .iter()
        .zip(imps)
        .map(|(set, &imp)| {
            let mut per_part: std::collections::BTreeMap<usize, usize> = Default::default();
            for j in set {
                if let Some(&t) = part_of.get(j) {
                    *per_part.entry(t).or_insert(0) += 1;
                }
            }
            imp * per_part.values().map(|&c| (c - 1) as f64).sum::<f64>()
        })
        .sum();
    let n_parts = parts.len();
    Ok((
        parts,
        ChunkedReport { chunks, parts: n_parts, weighted_excess, max_part_size, size_cap },
    ))
}

/// Report from [`sample_partition`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleReport {
    pub pick: PickReport,
    pub chunked: ChunkedReport,
    /// Measured inflation `sum imp (1+delta)^{collisions} / sum imp`.
    pub inflation: f64,
}

/// Round output: the selected subset, its parts, and per-set factors
/// `(1 + delta)^{collisions}` for importance chaining.
pub type SampleRound = (Vec<usize>, Vec<Vec<usize>>, Vec<f64>, SampleReport);

/// One refinement round: select a sparse subset of the residue, then
/// partition it with few collisions.
pub fn sample_partition(
    r: &[usize],
    k: usize,
    sets: &[Vec<usize>],
    imps: &[f64],
    profile: &ConstantsProfile,
) -> Result<SampleRound> {
    let (r_sub, pick) = pick_sparse_subset(r, k, sets, imps, profile)?;
    let members: std::collections::BTreeSet<usize> = r_sub.iter().copied().collect();
    let inner: Vec<Vec<usize>> = sets
        .iter()
        .map(|s| s.iter().copied().filter(|j| members.contains(j)).collect())
        .collect();
    let (parts, chunked) = chunked_collision_partition(&r_sub, pick.k_used, &inner, imps, profile)?;
    let part_of: std::collections::BTreeMap<usize, usize> = parts
        .iter()
        .enumerate()
        .flat_map(|(t, p)| p.iter().map(move |&j| (j, t)))
        .collect();
    let mut factors = Vec::with_capacity(sets.len());
    for set in &inner {
        let mut per_part: std::collections::BTreeMap<usize, usize> = Default::default();
        for j in set {
            if let Some(&t) = part_of.get(j) {
                *per_part.entry(t).or_insert(0) += 1;
            }
        }
        let collisions: usize = per_part.values().map(|&c| c - 1).sum();
        factors.push((1.0 + profile.delta).powi(collisions as i32));
    }
    let total: f64 = imps.iter().sum();
    let inflated: f64 = imps.iter().zip(&factors).map(|(&w, &f)| w * f).sum();
    let inflation = if total > 0.0 { inflated / total } else { 1.0 };
    Ok((r_sub, parts, factors, SampleReport { pick, chunked, inflation }))
}

/// Report from [`refine_part`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReport {
    pub rounds: usize,
    pub parts: usize,
    /// Parts beyond `|R| / 100`.
    pub additive_parts: f64,
    pub inflation: f64,
    pub max_part_size: usize,
    pub size_cap: f64,
}

/// Partitions one coarse part by iterating [`sample_partition`] on the
/// shrinking residue until it is exhausted. Importance factors accumulate
/// across rounds exactly as the final inflation bound multiplies them.
pub fn refine_part(
    part_elems: &[usize],
    k: usize,
    sets: &[Vec<usize>],
    imps: &[f64],
    profile: &ConstantsProfile,
) -> Result<(Vec<Vec<usize>>, Vec<f64>, RefineReport)> {
    let n_hat = hat(part_elems.iter().copied().max().map_or(2, |x| x + 1));
    let k = k.max(1);
    let mut residue: Vec<usize> = part_elems.to_vec();
    residue.sort_unstable();
    let mut imp_now: Vec<f64> = imps.to_vec();
    let mut total_factor: Vec<f64> = vec![1.0; sets.len()];
    let mut parts: Vec<Vec<usize>> = Vec::new();
    let round_cap = ((k as f64) * n_hat.ln().powi(2)).ceil() as usize + 8 * k + 32;
    let mut rounds = 0usize;
    let mut stuck = 0usize;
    let mut max_part_size = 0usize;
    let mut size_cap = 1.0f64;
    while !residue.is_empty() {
        if rounds >= round_cap {
            return Err(Error::contract(format!(
                "refine_part: residue of {} left after {rounds} rounds",
                residue.len()
            )));
        }
        let live: std::collections::BTreeSet<usize> = residue.iter().copied().collect();
        let restricted: Vec<Vec<usize>> = sets
            .iter()
            .map(|s| s.iter().copied().filter(|j| live.contains(j)).collect())
            .collect();
        let k_round = restricted.iter().map(Vec::len).max().unwrap_or(0).clamp(1, k);
        let (r_sub, new_parts, factors, srep) =
            sample_partition(&residue, k_round, &restricted, &imp_now, profile)?;
        if r_sub.is_empty() {
            stuck += 1;
            if stuck >= 3 {
                return Err(Error::contract("refine_part: residue stopped shrinking"));
            }
            continue;
        }
        stuck = 0;
        max_part_size = max_part_size.max(srep.chunked.max_part_size);
        size_cap = size_cap.max(srep.chunked.size_cap);
        parts.extend(new_parts);
        for ((w, f), tf) in imp_now.iter_mut().zip(&factors).zip(&mut total_factor) {
            *w *= f;
            *tf *= f;
        }
        let gone: std::collections::BTreeSet<usize> = r_sub.into_iter().collect();
        residue.retain(|j| !gone.contains(j));
        rounds += 1;
    }
    let total: f64 = imps.iter().sum();
    let inflated: f64 = imps.iter().zip(&total_factor).map(|(&w, &f)| w * f).sum();
    let inflation = if total > 0.0 { inflated / total } else { 1.0 };
    let additive_parts = (parts.len() as f64 - part_elems.len() as f64 / 100.0).max(0.0);
    let report = RefineReport {
        rounds,
        parts: parts.len(),
        additive_parts,
        inflation,
        max_part_size,
        size_cap,
    };
    Ok((parts, total_factor, report))
}

/// Output of [`isolation_partition`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsolationResult {
    pub coarse: Partition,
    pub fine: Partition,
    /// Fine part -> coarse part.
    pub refinement_map: Vec<usize>,
    /// Per small set, `(1 + delta)^{total collisions}`.
    pub small_factors: Vec<f64>,
    /// Per small set, total collisions `sum_t max(|S ∩ Q_t| - 1, 0)`.
    pub small_collisions: Vec<usize>,
    /// Measured importance inflation across the whole chain.
    pub inflation: f64,
    /// The inflation target it was verified against.
    pub inflation_target: f64,
    /// Per big set, measured `max_t |B ∩ P_t|`.
    pub big_split_max: Vec<usize>,
    /// Per big set, the certified coarse cap.
    pub big_split_cap: Vec<f64>,
    pub fine_size_cap: f64,
}

/// Two-level partition: coarse parts split every big set evenly; the fine
/// refinement isolates small-set elements with certified importance
/// inflation. Coarse parts are refined sequentially so importances chain.
pub fn isolation_partition(
    n: usize,
    small_sets: &[Vec<usize>],
    small_imp: &[f64],
    big_sets: &[Vec<usize>],
    profile: &ConstantsProfile,
) -> Result<IsolationResult> {
    let m_scale = hat(small_sets.len() + big_sets.len());
    let small_cap = profile.isolation_small_cap(n, m_scale);
    let big_floor = profile.isolation_big_floor(n, m_scale);
    let offenders: Vec<usize> = small_sets
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() > small_cap)
        .map(|(i, _)| i)
        .collect();
    if !offenders.is_empty() {
        return Err(Error::invalid(format!(
            "small sets above the cap {small_cap}: {offenders:?}"
        )));
    }
    let offenders: Vec<usize> = big_sets
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() < big_floor)
        .map(|(i, _)| i)
        .collect();
    if !offenders.is_empty() {
        return Err(Error::invalid(format!(
            "big sets below the floor {big_floor}: {offenders:?}"
        )));
    }

    // coarse split: big sets plus the full ground set for size balance
    let t_p = profile
        .isolation_coarse_parts(n, m_scale)
        .min(largest_pow2(n.max(2) / 2).max(1));
    let mut family: Vec<Vec<usize>> = Vec::with_capacity(big_sets.len() + 1);
    family.push((0..n).collect());
    family.extend(big_sets.iter().cloned());
    let fam = SetSystem::new(n, family)?;
    let n_hat = hat(n);
    let eps_coarse = (1.0 / (2.0 * n_hat.ln().powi(3))).clamp(1e-6, 0.5);
    let (coarse, coarse_rep) = multiway_unweighted(&fam, t_p, eps_coarse, profile)?;

    let inflation_target = 1.0 + profile.isolation_inflation_target(n);
    let mut imp_now: Vec<f64> = small_imp.to_vec();
    let mut small_factors = vec![1.0f64; small_sets.len()];
    let mut fine_parts: Vec<Vec<usize>> = Vec::new();
    let mut refinement_map: Vec<usize> = Vec::new();
    let mut fine_size_cap = 1.0f64;
    for (t, part) in coarse.parts.iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        let members: std::collections::BTreeSet<usize> = part.iter().copied().collect();
        let restricted: Vec<Vec<usize>> = small_sets
            .iter()
            .map(|s| s.iter().copied().filter(|j| members.contains(j)).collect())
            .collect();
        let k_t = restricted.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let (new_parts, factors, rep) = refine_part(part, k_t, &restricted, &imp_now, profile)?;
        fine_size_cap = fine_size_cap.max(rep.size_cap);
        for p in new_parts {
            refinement_map.push(t);
            fine_parts.push(p);
        }
        for ((w, f), tf) in imp_now.iter_mut().zip(&factors).zip(&mut small_factors) {
            *w *= f;
            *tf *= f;
        }
    }

    // fallback merging keeps the fine partition at most n/2 parts without
    // crossing coarse boundaries or the profile size cap
    let profile_cap = profile.fine_part_cap(n);
    if n >= 4 {
        merge_small_parts(
            &mut fine_parts,
            &mut refinement_map,
            small_sets,
            n / 2,
            (profile_cap / 2.0).max(2.0) as usize,
        );
    }
    fine_size_cap = fine_size_cap.max(profile_cap);
    let fine = Partition::from_parts(n, fine_parts)?;
    fine.validate()?;
    if !fine.refines(&coarse) {
        return Err(Error::contract("fine partition does not refine the coarse one"));
    }

    // recount collisions from the final partition (merging may add some)
    let mut small_collisions = vec![0usize; small_sets.len()];
    for (i, set) in small_sets.iter().enumerate() {
        let mut per_part: std::collections::BTreeMap<usize, usize> = Default::default();
        for &j in set {
            *per_part.entry(fine.part_of[j]).or_insert(0) += 1;
        }
        small_collisions[i] = per_part.values().map(|&c| c - 1).sum();
    }
    for (c, f) in small_collisions.iter().zip(&mut small_factors) {
        let exact = (1.0 + profile.delta).powi(*c as i32);
        if exact > *f {
            // merging introduced collisions beyond the chained factor
            *f = exact;
        }
    }
    let total: f64 = small_imp.iter().sum();
    let inflated: f64 = small_imp.iter().zip(&small_factors).map(|(&w, &f)| w * f).sum();
    let inflation = if total > 0.0 { inflated / total } else { 1.0 };
    if inflation > inflation_target * (1.0 + 1e-9) {
        return Err(Error::contract(format!(
            "importance inflation {inflation} exceeds target {inflation_target}"
        )));
    }

    // big-set coarse split caps (family row 0 is the full ground set)
    let mut big_split_max = Vec::with_capacity(big_sets.len());
    let mut big_split_cap = Vec::with_capacity(big_sets.len());
    for (b, set) in big_sets.iter().enumerate() {
        let mut counts = vec![0usize; coarse.num_parts];
        for &j in set {
            counts[coarse.part_of[j]] += 1;
        }
        big_split_max.push(counts.into_iter().max().unwrap_or(0));
        big_split_cap.push(coarse_rep.count_cap[b + 1]);
    }
    Ok(IsolationResult {
        coarse,
        fine,
        refinement_map,
        small_factors,
        small_collisions,
        inflation,
        inflation_target,
        big_split_max,
        big_split_cap,
        fine_size_cap,
    })
}

fn largest_pow2(x: usize) -> usize {
    let mut p = 1usize;
    while p * 2 <= x {
        p *= 2;
    }
    p
}

/// Greedily merges undersized parts (within one coarse part) until at most
/// `max_parts` remain, preferring merges that add no collisions; merged
/// parts never exceed twice `merge_limit`.
fn merge_small_parts(
    parts: &mut Vec<Vec<usize>>,
    map: &mut Vec<usize>,
    small_sets: &[Vec<usize>],
    max_parts: usize,
    merge_limit: usize,
) {
    if parts.len() <= max_parts {
        return;
    }
    // element -> small sets containing it
    let mut owner: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in small_sets.iter().enumerate() {
        for &j in s {
            owner.entry(j).or_default().push(i);
        }
    }
    let sets_of = |part: &[usize]| -> std::collections::BTreeSet<usize> {
        part.iter()
            .flat_map(|j| owner.get(j).into_iter().flatten().copied())
            .collect()
    };
    // escalate the mergeable-size threshold until the target is met
    let mut size_limit = 1usize;
    let mut last_len = usize::MAX;
    while parts.len() > max_parts && size_limit <= merge_limit {
        if parts.len() >= last_len {
            size_limit *= 2; // no progress at this limit
        }
        last_len = parts.len();
        let mut need_merges = parts.len() - max_parts;
        let mut merged: Vec<Vec<usize>> = Vec::new();
        let mut merged_map: Vec<usize> = Vec::new();
        let mut idx: Vec<usize> = (0..parts.len()).collect();
        idx.sort_by_key(|&i| (map[i], parts[i].len()));
        let mut used = vec![false; parts.len()];
        let window = 64;
        for pos in 0..idx.len() {
            let i = idx[pos];
            if used[i] {
                continue;
            }
            used[i] = true;
            let mut cur = parts[i].clone();
            let coarse_id = map[i];
            if need_merges > 0 && cur.len() <= size_limit {
                let my_sets = sets_of(&cur);
                let mut partner: Option<usize> = None;
                let mut fallback: Option<usize> = None;
                for &cand in idx.iter().skip(pos + 1).take(window) {
                    if used[cand] || map[cand] != coarse_id || parts[cand].len() > size_limit {
                        continue;
                    }
                    if sets_of(&parts[cand]).is_disjoint(&my_sets) {
                        partner = Some(cand);
                        break;
                    }
                    fallback.get_or_insert(cand);
                }
                if let Some(cand) = partner.or(fallback) {
                    used[cand] = true;
                    cur.extend(parts[cand].iter().copied());
                    need_merges -= 1;
                }
            }
            cur.sort_unstable();
            merged.push(cur);
            merged_map.push(coarse_id);
        }
        *parts = merged;
        *map = merged_map;
    }
}
