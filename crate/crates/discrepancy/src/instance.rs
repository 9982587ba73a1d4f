//! Instance representations and the operations every solver builds on:
//! discrepancy evaluation, restriction to a sub-ground-set, sign mixing,
//! and a brute-force oracle for small instances.
//!
//! Element and row indices are 0-based throughout. All logarithms are
//! natural, with the conventions `m̂ = max(m, 2)` and `n̂ = max(n, 2)`.

use crate::error::{Error, Result};
use crate::exec;
use serde::{Deserialize, Serialize};

/// Clamped count used inside logarithms so `ln` is always positive.
pub fn hat(x: usize) -> f64 {
    x.max(2) as f64
}

/// A family of sets over the ground set `[0, n)`, row-compressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSystem {
    pub n: usize,
    pub sets: Vec<Vec<usize>>,
    /// Largest row size (0 when there are no rows).
    pub s_max: usize,
}

impl SetSystem {
    /// Builds a system, sorting and validating every row.
    pub fn new(n: usize, mut sets: Vec<Vec<usize>>) -> Result<Self> {
        for (i, row) in sets.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("row {i} has duplicate elements")));
            }
            if row.last().is_some_and(|&j| j >= n) {
                return Err(Error::invalid(format!("row {i} has element out of [0, {n})")));
            }
        }
        let s_max = sets.iter().map(Vec::len).max().unwrap_or(0);
        Ok(SetSystem { n, sets, s_max })
    }

    pub fn m(&self) -> usize {
        self.sets.len()
    }

    pub fn total_size(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// 0/1 matrix view of the system.
    pub fn to_weighted(&self) -> WeightedSystem {
        let rows = self
            .sets
            .iter()
            .map(|s| s.iter().map(|&j| (j, 1.0)).collect())
            .collect();
        WeightedSystem::from_rows(self.n, rows).expect("0/1 rows are always valid")
    }

    /// Induced sub-system on `part` (reindexed to `0..part.len()`), with rows
    /// that miss `part` entirely dropped. Returns the surviving original row
    /// ids in order.
    pub fn restrict(&self, part: &[usize]) -> Result<(SetSystem, Vec<usize>)> {
        let place = placement(self.n, part)?;
        let mut sets = Vec::new();
        let mut row_map = Vec::new();
        for (i, row) in self.sets.iter().enumerate() {
            let sub: Vec<usize> = row.iter().filter_map(|&j| place[j]).collect();
            if !sub.is_empty() {
                sets.push(sub);
                row_map.push(i);
            }
        }
        Ok((SetSystem::new(part.len(), sets)?, row_map))
    }
}

/// A sparse real matrix: the weighted discrepancy instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSystem {
    pub n: usize,
    pub m: usize,
    /// Per-row sparse entries `(column, value)`, sorted by column, no duplicates.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Cached `sum_j a_ij^2` per row.
    pub row_norms: Vec<f64>,
}

impl WeightedSystem {
    pub fn from_rows(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid(format!("row {i} has a duplicate column")));
            }
            if row.last().is_some_and(|&(j, _)| j >= n) {
                return Err(Error::invalid(format!("row {i} has column out of [0, {n})")));
            }
            if row.iter().any(|&(_, a)| !a.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite value")));
            }
        }
        let m = rows.len();
        let row_norms = rows
            .iter()
            .map(|r| r.iter().map(|&(_, a)| a * a).sum())
            .collect();
        Ok(WeightedSystem { n, m, rows, row_norms })
    }

    pub fn from_triples(n: usize, m: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); m];
        for &(i, j, a) in triples {
            if i >= m {
                return Err(Error::invalid(format!("row index {i} out of [0, {m})")));
            }
            rows[i].push((j, a));
        }
        Self::from_rows(n, rows)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|&(_, a)| a.abs()))
            .fold(0.0, f64::max)
    }

    /// Column-major view: for each column, the `(row, value)` pairs touching it.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                cols[j].push((i, a));
            }
        }
        cols
    }

    /// Induced sub-instance on `part`; rows with no entry in `part` dropped.
    pub fn restrict(&self, part: &[usize]) -> Result<(WeightedSystem, Vec<usize>)> {
        let place = placement(self.n, part)?;
        let mut rows = Vec::new();
        let mut row_map = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let sub: Vec<(usize, f64)> = row
                .iter()
                .filter_map(|&(j, a)| place[j].map(|jj| (jj, a)))
                .collect();
            if !sub.is_empty() {
                rows.push(sub);
                row_map.push(i);
            }
        }
        Ok((WeightedSystem::from_rows(part.len(), rows)?, row_map))
    }
}

fn placement(n: usize, part: &[usize]) -> Result<Vec<Option<usize>>> {
    let mut place = vec![None; n];
    for (slot, &j) in part.iter().enumerate() {
        if j >= n {
            return Err(Error::invalid(format!("part element {j} out of [0, {n})")));
        }
        if place[j].is_some() {
            return Err(Error::invalid(format!("part repeats element {j}")));
        }
        place[j] = Some(slot);
    }
    Ok(place)
}

/// A value assignment in `{-1, +1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub chi: Vec<i8>,
}

impl Assignment {
    pub fn new(chi: Vec<i8>) -> Result<Self> {
        if chi.iter().any(|&c| c != 1 && c != -1) {
            return Err(Error::invalid("assignment entries must be -1 or +1"));
        }
        Ok(Assignment { chi })
    }

    pub fn ones(n: usize) -> Self {
        Assignment { chi: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    pub fn negated(&self) -> Self {
        Assignment { chi: self.chi.iter().map(|&c| -c).collect() }
    }
}

/// Nonnegative per-constraint weights driving importance-averaged solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub imp: Vec<f64>,
}

impl ImportanceVector {
    pub fn new(imp: Vec<f64>) -> Result<Self> {
        if imp.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::invalid("importances must be finite and >= 0"));
        }
        Ok(ImportanceVector { imp })
    }

    pub fn uniform(m: usize) -> Self {
        ImportanceVector { imp: vec![1.0; m] }
    }
}

/// An ordered disjoint cover of `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub num_parts: usize,
    /// Element -> part index.
    pub part_of: Vec<usize>,
    /// Inverse lists, each sorted ascending.
    pub parts: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_part_of(num_parts: usize, part_of: Vec<usize>) -> Result<Self> {
        let mut parts = vec![Vec::new(); num_parts];
        for (j, &t) in part_of.iter().enumerate() {
            if t >= num_parts {
                return Err(Error::invalid(format!("part id {t} out of [0, {num_parts})")));
            }
            parts[t].push(j);
        }
        Ok(Partition { num_parts, part_of, parts })
    }

    pub fn from_parts(n: usize, parts: Vec<Vec<usize>>) -> Result<Self> {
        let mut part_of = vec![usize::MAX; n];
        for (t, part) in parts.iter().enumerate() {
            for &j in part {
                if j >= n {
                    return Err(Error::invalid(format!("element {j} out of [0, {n})")));
                }
                if part_of[j] != usize::MAX {
                    return Err(Error::invalid(format!("element {j} appears in two parts")));
                }
                part_of[j] = t;
            }
        }
        if part_of.contains(&usize::MAX) {
            return Err(Error::invalid("parts do not cover the ground set"));
        }
        let mut parts = parts;
        for p in &mut parts {
            p.sort_unstable();
        }
        Ok(Partition { num_parts: parts.len(), part_of, parts })
    }

    pub fn identity(n: usize) -> Self {
        Partition { num_parts: 1, part_of: vec![0; n], parts: vec![(0..n).collect()] }
    }

    pub fn n(&self) -> usize {
        self.part_of.len()
    }

    /// Structural check: disjoint cover with consistent indexes.
    pub fn validate(&self) -> Result<()> {
        if self.parts.len() != self.num_parts {
            return Err(Error::contract("parts length != num_parts"));
        }
        let mut seen = vec![false; self.part_of.len()];
        for (t, part) in self.parts.iter().enumerate() {
            for &j in part {
                if seen[j] || self.part_of[j] != t {
                    return Err(Error::contract(format!("element {j} misplaced")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::contract("parts do not cover the ground set"));
        }
        Ok(())
    }

    /// True if every part of `self` lies inside one part of `coarse`.
    pub fn refines(&self, coarse: &Partition) -> bool {
        self.parts.iter().all(|part| {
            part.windows(2).all(|w| coarse.part_of[w[0]] == coarse.part_of[w[1]])
        })
    }
}

/// Per-constraint discrepancy summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscReport {
    /// Signed discrepancies `sum_j a_ij chi_j`.
    pub sdisc: Vec<f64>,
    /// Absolute values of `sdisc`.
    pub disc: Vec<f64>,
    /// Certified per-constraint bound (what the solver promises).
    pub bound: Vec<f64>,
    /// `disc / sqrt(row_norm * ln m̂)`, 0 where the row norm vanishes.
    pub ratio: Vec<f64>,
}

impl DiscReport {
    pub fn from_sdisc(sdisc: Vec<f64>, bound: Vec<f64>, row_norms: &[f64], m: usize) -> Self {
        let log_m = hat(m).ln();
        let disc: Vec<f64> = sdisc.iter().map(|s| s.abs()).collect();
        let ratio = disc
            .iter()
            .zip(row_norms)
            .map(|(&d, &q)| if q > 0.0 { d / (q * log_m).sqrt() } else { 0.0 })
            .collect();
        DiscReport { sdisc, disc, bound, ratio }
    }

    pub fn max_disc(&self) -> f64 {
        self.disc.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratio.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// True when every row meets its certified bound (with a hair of float slack).
    pub fn certified(&self) -> bool {
        self.disc
            .iter()
            .zip(&self.bound)
            .all(|(&d, &b)| d <= b * (1.0 + 1e-9) + 1e-9)
    }
}

/// Exact signed discrepancies of a set system under `chi` (integer arithmetic).
pub fn evaluate_sets(sys: &SetSystem, chi: &Assignment) -> Result<Vec<i64>> {
    if chi.len() != sys.n {
        return Err(Error::invalid(format!(
            "assignment length {} != ground set size {}",
            chi.len(),
            sys.n
        )));
    }
    Ok(exec::map(&sys.sets, |row| {
        row.iter().map(|&j| chi.chi[j] as i64).sum::<i64>()
    }))
}

/// Signed discrepancies of a weighted system under `chi`.
///
/// Rows are summed with a fixed-shape chunked reduction, so the result is
/// identical for any worker count.
pub fn evaluate_weighted(sys: &WeightedSystem, chi: &Assignment) -> Result<Vec<f64>> {
    if chi.len() != sys.n {
        return Err(Error::invalid(format!(
            "assignment length {} != ground set size {}",
            chi.len(),
            sys.n
        )));
    }
    Ok(exec::map(&sys.rows, |row| {
        exec::sum_by(row, |&(j, a)| a * chi.chi[j] as f64)
    }))
}

/// Full report for a set system; bounds default to the trivial `|S_i|`.
pub fn evaluate(sys: &SetSystem, chi: &Assignment) -> Result<DiscReport> {
    let sdisc: Vec<f64> = evaluate_sets(sys, chi)?.iter().map(|&s| s as f64).collect();
    let norms: Vec<f64> = sys.sets.iter().map(|s| s.len() as f64).collect();
    let bound = norms.clone();
    Ok(DiscReport::from_sdisc(sdisc, bound, &norms, sys.m()))
}

/// Mixes per-part assignments with per-part signs:
/// `chi_j = parts_assignment_j * signs[part_of(j)]`.
pub fn mix(parts_assignment: &Assignment, partition: &Partition, signs: &Assignment) -> Result<Assignment> {
    if signs.len() != partition.num_parts {
        return Err(Error::invalid(format!(
            "signs length {} != number of parts {}",
            signs.len(),
            partition.num_parts
        )));
    }
    if parts_assignment.len() != partition.n() {
        return Err(Error::invalid("assignment length != partition ground set"));
    }
    let chi = parts_assignment
        .chi
        .iter()
        .zip(&partition.part_of)
        .map(|(&c, &t)| c * signs.chi[t])
        .collect();
    Ok(Assignment { chi })
}

/// Hard cap for the exhaustive minimizer.
pub const BRUTE_FORCE_CAP: usize = 24;

/// Exhaustive minimum of `max_i |disc(S_i)|` over all assignments, exploiting
/// the `chi <-> -chi` symmetry (first coordinate pinned to +1). Enumeration
/// walks a Gray code so each step touches one element.
pub fn brute_force_min_disc(sys: &SetSystem) -> Result<(Assignment, i64)> {
    if sys.n > BRUTE_FORCE_CAP {
        return Err(Error::SizeLimit(format!(
            "brute force capped at n <= {BRUTE_FORCE_CAP}, got {}",
            sys.n
        )));
    }
    if sys.n == 0 {
        return Ok((Assignment { chi: vec![] }, 0));
    }
    let m = sys.m();
    // element -> rows containing it
    let mut touch: Vec<Vec<usize>> = vec![Vec::new(); sys.n];
    for (i, row) in sys.sets.iter().enumerate() {
        for &j in row {
            touch[j].push(i);
        }
    }
    let mut chi: Vec<i8> = vec![1; sys.n];
    let mut sums: Vec<i64> = sys.sets.iter().map(|r| r.len() as i64).collect();
    let mut best = *sums.iter().max().unwrap_or(&0);
    let mut best_code: u64 = 0;
    // Gray-code sweep over the free coordinates 1..n (coordinate 0 stays +1).
    let free = sys.n - 1;
    let mut code: u64 = 0;
    for step in 1u64..(1u64 << free) {
        let flip = step.trailing_zeros() as usize + 1;
        code ^= 1 << (flip - 1);
        chi[flip] = -chi[flip];
        let delta = 2 * chi[flip] as i64;
        for &i in &touch[flip] {
            sums[i] += delta;
        }
        let worst = sums.iter().map(|s| s.abs()).max().unwrap_or(0);
        if worst < best {
            best = worst;
            best_code = code;
        }
        if best == 0 && m > 0 {
            break;
        }
    }
    let mut out = vec![1i8; sys.n];
    for b in 0..free {
        if best_code >> b & 1 == 1 {
            out[b + 1] = -1;
        }
    }
    Ok((Assignment { chi: out }, best))
}
