//! End-to-end discrepancy solvers.
//!
//! The unweighted path partitions the ground set, balances each part (by
//! potential derandomization or pairwise search), lets a multiplicative
//! weights controller average the per-part variance losses, and recurses on
//! the per-part mixture coefficients. The weighted path first integerizes,
//! then alternates isolation partitioning with per-part derandomization,
//! carrying per-row collision budgets; the final bound combines the block
//! sums by Cauchy-Schwarz with the base-case tail certificate.
//!
//! Certificates are composed from measured per-level quantities and the
//! potential module's proven tail bounds; declared per-level targets are
//! checked and breaches are reported, never silently absorbed.

use crate::error::{Error, Result};
use crate::exec;
use crate::instance::{
    evaluate_weighted, hat, mix, Assignment, DiscReport, ImportanceVector, Partition, SetSystem,
    WeightedSystem,
};
use crate::isolate::isolation_partition;
use crate::mwu::MwuState;
use crate::pairwise::pairwise_balance;
use crate::partition::{multiway_unweighted, multiway_weighted};
use crate::potential::{seq_derandomize, PotentialParams};
use crate::profile::ConstantsProfile;
use serde::{Deserialize, Serialize};

/// Solver configuration; wraps a profile with the weighted-path knobs.
#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub profile: ConstantsProfile,
    /// Requested integerization exponent (`max |a_ij| -> n̂^e`), clamped so
    /// exact i128 arithmetic cannot overflow.
    pub scale_exp: u32,
}

impl SolveConfig {
    pub fn new(profile: ConstantsProfile) -> Self {
        SolveConfig { profile, scale_exp: 10 }
    }
}

/// Per-level telemetry shared by the recursive solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelStats {
    pub n: usize,
    pub parts: usize,
    pub mwu_rounds: usize,
    /// Measured variance inflation of the level (1.0 = lossless).
    pub inflation: f64,
    /// Declared target the level was checked against.
    pub inflation_target: f64,
    pub target_breached: bool,
    /// Gaps clamped before entering the controller.
    pub clamped_gaps: usize,
    /// Worst per-constraint average gap reported by the controller.
    pub mwu_avg_max: f64,
    /// Collision-budget spend this level (weighted path only).
    pub col_total: usize,
}

/// Per-part solve result: surviving row ids, the part assignment, and the
/// per-row signed part sums.
type PartSolve<T> = Result<(Vec<usize>, Assignment, Vec<T>)>;

pub(crate) fn pot_params(profile: &ConstantsProfile, m: usize, m_scale: f64) -> PotentialParams {
    PotentialParams {
        m_scale: m_scale.max(hat(m)).max(profile.pot_m_floor),
        tail_coeff: profile.tail_coeff,
        lambda_coeff: profile.lambda_coeff,
    }
}

fn pow2_at_least(x: f64) -> usize {
    let mut p = 1usize;
    while (p as f64) < x {
        p *= 2;
    }
    p
}

fn largest_pow2_le(x: usize) -> usize {
    let mut p = 1usize;
    while p * 2 <= x {
        p *= 2;
    }
    p
}

/// Controller rounds for a level with `l` parts: a power of two dividing `l`.
fn mwu_rounds_for(l: usize, n: usize, m: usize) -> usize {
    let nm = hat(n) * hat(m);
    let want = pow2_at_least((nm.ln() * nm.ln() / 4.0).max(4.0)).min(256);
    want.min(largest_pow2_le(l.max(1)))
}

/// Clamps oracle gaps to the controller ceiling. The true sums always feed
/// the certificates; clamping only weakens the controller's steering.
fn clamp_gaps(gaps: &mut [f64], cap: f64) -> usize {
    let mut clamped = 0;
    for g in gaps.iter_mut() {
        if *g > cap {
            *g = cap;
            clamped += 1;
        }
        if *g < 0.0 {
            *g = 0.0;
        }
    }
    clamped
}

fn empty_report(m: usize) -> DiscReport {
    DiscReport::from_sdisc(vec![0.0; m], vec![0.0; m], &vec![0.0; m], m)
}

// ---------------------------------------------------------------------------
// warm-ups
// ---------------------------------------------------------------------------

/// Report from the warm-up solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarmupReport {
    pub parts: usize,
    /// Composed constant: `max_i disc_i^2 / (|S_i| ln^2 m̂)` for [`warmup_sqrt`],
    /// `max_i disc_i^2 / (s ln m̂)` for [`warmup_sqrt_optimal`].
    pub k_constant: f64,
    pub report: DiscReport,
}

/// Partition into about `sqrt(n)` parts, balance each part independently,
/// then balance the per-part mixture. Certifies
/// `disc^2(S_i) <= tail^2 ln(m̂) * sum_l a'^2_il <= K1 |S_i| ln^2 m̂`.
pub fn warmup_sqrt(sys: &SetSystem, profile: &ConstantsProfile) -> Result<(Assignment, WarmupReport)> {
    let n = sys.n;
    let m = sys.m();
    if n == 0 {
        return Ok((
            Assignment { chi: vec![] },
            WarmupReport { parts: 0, k_constant: 0.0, report: empty_report(m) },
        ));
    }
    let l = pow2_at_least((n as f64).sqrt()).min(largest_pow2_le(n));
    let mut family = vec![(0..n).collect::<Vec<_>>()];
    family.extend(sys.sets.iter().cloned());
    let fam = SetSystem::new(n, family)?;
    let (partition, _) = multiway_unweighted(&fam, l, 0.25, profile)?;
    let params = pot_params(profile, m, hat(m));

    let solves: Vec<PartSolve<f64>> =
        exec::map(&partition.parts, |part| {
            let (sub, row_map) = sys.restrict(part)?;
            let w = sub.to_weighted();
            let (chi, rep) = seq_derandomize(&w, &ImportanceVector::uniform(w.m), params)?;
            Ok((row_map, chi, rep.sdisc))
        });
    let mut chi_bar = vec![1i8; n];
    let mut reduced_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (t, res) in solves.into_iter().enumerate() {
        let (row_map, part_chi, sdisc) = res?;
        for (local, &j) in partition.parts[t].iter().enumerate() {
            chi_bar[j] = part_chi.chi[local];
        }
        for (r, &orig) in row_map.iter().enumerate() {
            if sdisc[r] != 0.0 {
                reduced_rows[orig].push((t, sdisc[r]));
            }
        }
    }
    let chi_bar = Assignment::new(chi_bar)?;
    let reduced = WeightedSystem::from_rows(l, reduced_rows)?;
    let (signs, mix_rep) = seq_derandomize(&reduced, &ImportanceVector::uniform(m), params)?;
    let chi = mix(&chi_bar, &partition, &signs)?;

    let log_m = hat(m).ln();
    let norms: Vec<f64> = sys.sets.iter().map(|s| s.len() as f64).collect();
    let bound: Vec<f64> = reduced
        .row_norms
        .iter()
        .map(|&q| profile.tail_coeff * (q * log_m).sqrt())
        .collect();
    let report = DiscReport::from_sdisc(mix_rep.sdisc.clone(), bound, &norms, m);
    if !report.certified() {
        return Err(Error::contract("warmup_sqrt: certificate violated"));
    }
    let k_constant = report
        .disc
        .iter()
        .zip(&norms)
        .map(|(&d, &s)| if s > 0.0 { d * d / (s * log_m * log_m) } else { 0.0 })
        .fold(0.0, f64::max);
    Ok((chi, WarmupReport { parts: l, k_constant, report }))
}

/// Grouped variant: the groups become controller rounds so per-set variance
/// losses average out; certifies `disc^2(S_i) <= K2 s ln m̂` with measured `K2`.
pub fn warmup_sqrt_optimal(
    sys: &SetSystem,
    s: usize,
    profile: &ConstantsProfile,
) -> Result<(Assignment, WarmupReport)> {
    let n = sys.n;
    let m = sys.m();
    if sys.s_max > s {
        return Err(Error::invalid(format!("a set exceeds the size cap {s}")));
    }
    if n == 0 {
        return Ok((
            Assignment { chi: vec![] },
            WarmupReport { parts: 0, k_constant: 0.0, report: empty_report(m) },
        ));
    }
    let m_hat = hat(m);
    let t_groups = pow2_at_least(m_hat.ln().powi(2).max(2.0)).min(largest_pow2_le(n));
    let mut family = vec![(0..n).collect::<Vec<_>>()];
    family.extend(sys.sets.iter().cloned());
    let fam = SetSystem::new(n, family)?;
    let eps = (1.0 / (10.0 * m_hat.ln())).clamp(1e-3, 0.5);
    let (groups, grep) = multiway_unweighted(&fam, t_groups, eps, profile)?;
    let params = pot_params(profile, m, m_hat);

    let mut mwu = MwuState::new(m, profile.mwu_gap_cap.max(2.0), profile.mwu_epsilon)?;
    let mut chi_bar = vec![1i8; n];
    let mut piece_of = vec![0usize; n];
    let mut reduced_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut piece_count = 0usize;
    for group in &groups.parts {
        if group.is_empty() {
            continue;
        }
        let weights = mwu.weights();
        let (sub, row_map) = sys.restrict(group)?;
        let pieces = pow2_at_least((group.len() as f64).sqrt()).min(largest_pow2_le(group.len()));
        let piece_partition = if pieces > 1 {
            let mut fam2 = vec![(0..sub.n).collect::<Vec<_>>()];
            fam2.extend(sub.sets.iter().cloned());
            multiway_unweighted(&SetSystem::new(sub.n, fam2)?, pieces, 0.25, profile)?.0
        } else {
            Partition::identity(sub.n)
        };
        let imp_local: Vec<f64> = row_map.iter().map(|&i| weights[i]).collect();
        let solves: Vec<PartSolve<f64>> =
            exec::map(&piece_partition.parts, |piece| {
                let (piece_sys, pmap) = sub.restrict(piece)?;
                let w = piece_sys.to_weighted();
                let imp = ImportanceVector::new(pmap.iter().map(|&r| imp_local[r]).collect())?;
                let (chi, rep) = seq_derandomize(&w, &imp, params)?;
                Ok((pmap, chi, rep.sdisc))
            });
        let mut round_var = vec![0.0f64; m];
        for (p, res) in solves.into_iter().enumerate() {
            let (pmap, piece_chi, sdisc) = res?;
            for (local, &sub_j) in piece_partition.parts[p].iter().enumerate() {
                chi_bar[group[sub_j]] = piece_chi.chi[local];
                piece_of[group[sub_j]] = piece_count;
            }
            for (r, &lr) in pmap.iter().enumerate() {
                let orig = row_map[lr];
                if sdisc[r] != 0.0 {
                    reduced_rows[orig].push((piece_count, sdisc[r]));
                }
                round_var[orig] += sdisc[r] * sdisc[r];
            }
            piece_count += 1;
        }
        let mut gaps: Vec<f64> = (0..m)
            .map(|i| {
                let cap = grep.count_cap[i + 1].max(1.0);
                round_var[i] / ((1.0 + 1.0 / params.m_scale) * cap)
            })
            .collect();
        clamp_gaps(&mut gaps, profile.mwu_gap_cap.max(2.0));
        mwu.update(&gaps)?;
    }
    let chi_bar = Assignment::new(chi_bar)?;
    let pieces = Partition::from_part_of(piece_count.max(1), piece_of)?;
    let reduced = WeightedSystem::from_rows(piece_count.max(1), reduced_rows)?;
    let (signs, mix_rep) = seq_derandomize(&reduced, &ImportanceVector::uniform(m), params)?;
    let chi = mix(&chi_bar, &pieces, &signs)?;

    let log_m = m_hat.ln();
    let norms: Vec<f64> = sys.sets.iter().map(|x| x.len() as f64).collect();
    let bound: Vec<f64> = reduced
        .row_norms
        .iter()
        .map(|&q| profile.tail_coeff * (q * log_m).sqrt())
        .collect();
    let report = DiscReport::from_sdisc(mix_rep.sdisc.clone(), bound, &norms, m);
    if !report.certified() {
        return Err(Error::contract("warmup_sqrt_optimal: certificate violated"));
    }
    let k_constant = report
        .disc
        .iter()
        .map(|&d| d * d / (s.max(1) as f64 * log_m))
        .fold(0.0, f64::max);
    Ok((chi, WarmupReport { parts: piece_count, k_constant, report }))
}

// ---------------------------------------------------------------------------
// balanced-weight recursion
// ---------------------------------------------------------------------------

/// One level of the recursion: a partition, a tentative assignment inside
/// every part, and the per-part mixture coefficients for the next level.
pub struct RecursionLevel {
    pub chi_bar: Assignment,
    pub partition: Partition,
    pub reduced: WeightedSystem,
    pub stats: LevelStats,
}

/// Validates the variance preconditions of the balanced-weight recursion.
fn check_balanced_preconditions(
    sys: &WeightedSystem,
    delta: f64,
    profile: &ConstantsProfile,
) -> Result<()> {
    let mut offenders = Vec::new();
    for (i, &q) in sys.row_norms.iter().enumerate() {
        if q > delta * (1.0 + 1e-9) {
            offenders.push(i);
        }
    }
    if !offenders.is_empty() {
        return Err(Error::invalid(format!(
            "rows with squared mass above the budget {delta}: {offenders:?}"
        )));
    }
    let cap = profile.maxsq_ratio(sys.n, sys.m) * delta;
    let mut offenders = Vec::new();
    for (i, row) in sys.rows.iter().enumerate() {
        let mx = row.iter().map(|&(_, a)| a * a).fold(0.0, f64::max);
        if mx > cap * (1.0 + 1e-9) {
            offenders.push(i);
        }
    }
    if !offenders.is_empty() {
        return Err(Error::invalid(format!(
            "rows with an entry above the flatness cap {cap}: {offenders:?}"
        )));
    }
    Ok(())
}

/// Builds one recursion level: weighted multi-way partition, per-part
/// derandomization under controller importances, mixture coefficients.
/// Verifies on output that per-part coefficients obey the tail cap and that
/// total per-row variance stayed within the declared level target
/// (breaches are reported and composed into the caller's certificate).
pub fn recursion_creator(
    sys: &WeightedSystem,
    delta: f64,
    imp_init: Option<&[f64]>,
    profile: &ConstantsProfile,
) -> Result<RecursionLevel> {
    check_balanced_preconditions(sys, delta, profile)?;
    let n = sys.n;
    let m = sys.m;
    if n < 4 {
        return Err(Error::invalid("recursion level needs at least 4 variables"));
    }
    let eps = profile.eps_recursion(n, m);
    let part_size = profile.recursion_part_size(n, m);
    let l = pow2_at_least(n as f64 / part_size)
        .clamp(2, largest_pow2_le(n / 2));
    let (partition, wrep) = multiway_weighted(sys, l, eps.min(1.0), profile)?;

    let m_scale = hat(n) * hat(m);
    let params = pot_params(profile, m, m_scale);
    let rounds = mwu_rounds_for(l, n, m);
    let per_round = l / rounds;
    let mut mwu = MwuState::new(m, profile.mwu_gap_cap.max(2.0), profile.mwu_epsilon)?;
    if let Some(imp0) = imp_init {
        // seed the controller so external importances keep steering
        let mut gaps: Vec<f64> = imp0.iter().map(|&w| w.max(0.0)).collect();
        clamp_gaps(&mut gaps, profile.mwu_gap_cap.max(2.0));
        let top = gaps.iter().cloned().fold(0.0f64, f64::max);
        if top > 0.0 {
            // pre-scale: a single synthetic round cannot violate the oracle
            // inequality because the budget is checked against the uniform
            // start
            let total: f64 = gaps.iter().sum();
            let scale = (m as f64 / total).min(1.0);
            for g in &mut gaps {
                *g *= scale;
            }
            mwu.update(&gaps)?;
        }
    }

    let mut chi_bar = vec![1i8; n];
    let mut reduced_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut clamped = 0usize;
    let tail_sq = profile.tail_coeff * profile.tail_coeff;
    for round in 0..rounds {
        let weights = mwu.weights();
        let lo = round * per_round;
        let hi = lo + per_round;
        let solves: Vec<PartSolve<f64>> =
            exec::map(&partition.parts[lo..hi], |part| {
                let (sub, row_map) = sys.restrict(part)?;
                let imp = ImportanceVector::new(row_map.iter().map(|&i| weights[i]).collect())?;
                let (chi, rep) = seq_derandomize(&sub, &imp, params)?;
                Ok((row_map, chi, rep.sdisc))
            });
        let mut round_var = vec![0.0f64; m];
        for (off, res) in solves.into_iter().enumerate() {
            let t = lo + off;
            let (row_map, part_chi, sdisc) = res?;
            for (local, &j) in partition.parts[t].iter().enumerate() {
                chi_bar[j] = part_chi.chi[local];
            }
            for (r, &orig) in row_map.iter().enumerate() {
                // per-part tail certificate check
                let cap = tail_sq * m_scale.ln() * wrep.mass_cap[orig];
                if sdisc[r] * sdisc[r] > cap * (1.0 + 1e-9) + 1e-12 {
                    return Err(Error::contract(format!(
                        "part {t}: row {orig} coefficient exceeds tail cap"
                    )));
                }
                if sdisc[r] != 0.0 {
                    reduced_rows[orig].push((t, sdisc[r]));
                }
                round_var[orig] += sdisc[r] * sdisc[r];
            }
        }
        let mut gaps: Vec<f64> = (0..m)
            .map(|i| {
                // measured worst part mass is a sound and much tighter
                // normalizer than the a-priori cap
                let q = wrep.measured_mass_max[i].max(f64::MIN_POSITIVE);
                round_var[i] / ((1.0 + 1.0 / m_scale) * per_round as f64 * q)
            })
            .collect();
        clamped += clamp_gaps(&mut gaps, profile.mwu_gap_cap.max(2.0));
        mwu.update(&gaps)?;
    }

    let chi_bar = Assignment::new(chi_bar)?;
    let reduced = WeightedSystem::from_rows(l, reduced_rows)?;
    // measured (A): worst per-row total variance against the level budget
    let inflation = reduced
        .row_norms
        .iter()
        .map(|&after| after / delta.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let inflation_target = 1.0 + profile.level_inflation_target(n);
    let stats = LevelStats {
        n,
        parts: l,
        mwu_rounds: rounds,
        inflation,
        inflation_target,
        target_breached: inflation > inflation_target * (1.0 + 1e-9),
        clamped_gaps: clamped,
        mwu_avg_max: mwu
            .averages()
            .averages
            .iter()
            .fold(0.0f64, |a, &b| a.max(b)),
        col_total: 0,
    };
    Ok(RecursionLevel { chi_bar, partition, reduced, stats })
}

/// Result of [`solve_balanced_weights`] and the unweighted front end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalancedOutcome {
    pub report: DiscReport,
    /// Composed constant `max_i bound_i^2 / (ln m̂ * Delta)`.
    pub c_prime_eff: f64,
    pub levels: Vec<LevelStats>,
    /// True if some level exceeded its declared inflation target (the
    /// certificate already accounts for the measured value).
    pub any_breach: bool,
}

/// Recursive solver for instances with per-row squared mass at most `delta`
/// and flat weights. The mixture coefficients of each level form the next
/// level's instance; the base case is a single potential pass.
pub fn solve_balanced_weights(
    sys: &WeightedSystem,
    delta: f64,
    profile: &ConstantsProfile,
) -> Result<(Assignment, BalancedOutcome)> {
    check_balanced_preconditions(sys, delta, profile)?;
    let mut levels: Vec<LevelStats> = Vec::new();
    let mut stack: Vec<(Assignment, Partition)> = Vec::new();
    let mut cur = sys.clone();
    let mut cur_delta = delta;
    let base_threshold = profile.base_n_threshold(sys.m);
    loop {
        if cur.n <= base_threshold
            || cur.n < 4
            || check_balanced_preconditions(&cur, cur_delta, profile).is_err()
        {
            break;
        }
        let level = recursion_creator(&cur, cur_delta, None, profile)?;
        if level.partition.num_parts > cur.n / 2 {
            return Err(Error::contract(
                "recursion level failed to halve the variable count",
            ));
        }
        cur_delta = cur_delta * level.stats.inflation.max(1.0) * (1.0 + 1e-12);
        levels.push(level.stats.clone());
        stack.push((level.chi_bar, level.partition));
        cur = level.reduced;
    }
    // base case: one potential pass over the remaining instance
    let params = pot_params(profile, cur.m, hat(cur.m));
    let (mut chi, base_rep) = seq_derandomize(&cur, &ImportanceVector::uniform(cur.m), params)?;
    let bound = base_rep.bound.clone();
    // lift through the levels; block structure keeps sums identical
    while let Some((chi_bar, partition)) = stack.pop() {
        chi = mix(&chi_bar, &partition, &chi)?;
    }
    let sdisc = evaluate_weighted(sys, &chi)?;
    let report = DiscReport::from_sdisc(sdisc, bound, &sys.row_norms, sys.m);
    let log_m = hat(sys.m).ln();
    let c_prime_eff = report
        .bound
        .iter()
        .map(|&b| b * b / (log_m * delta.max(f64::MIN_POSITIVE)))
        .fold(0.0, f64::max);
    let any_breach = levels.iter().any(|l| l.target_breached);
    if !report.certified() {
        return Err(Error::contract("balanced solve: lifted certificate violated"));
    }
    Ok((chi, BalancedOutcome { report, c_prime_eff, levels, any_breach }))
}

// ---------------------------------------------------------------------------
// unweighted front end
// ---------------------------------------------------------------------------

/// Outcome of [`solve_unweighted`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnweightedOutcome {
    pub report: DiscReport,
    /// `max_i disc_i / sqrt(|S_i| ln m̂)`.
    pub max_ratio: f64,
    /// Certified cap `sqrt(3 C'_eff ln(m̂) s)`.
    pub certified_cap: f64,
    pub path: &'static str,
    pub levels: Vec<LevelStats>,
}

/// Set balancing: direct potential pass for small set sizes, otherwise
/// partition + pairwise rounds under the controller + recursion on the
/// mixture.
pub fn solve_unweighted(
    sys: &SetSystem,
    profile: &ConstantsProfile,
) -> Result<(Assignment, UnweightedOutcome)> {
    let n = sys.n;
    let m = sys.m();
    let m_hat = hat(m);
    let log_m = m_hat.ln();
    if n == 0 {
        return Ok((
            Assignment { chi: vec![] },
            UnweightedOutcome {
                report: empty_report(m),
                max_ratio: 0.0,
                certified_cap: 0.0,
                path: "empty",
                levels: vec![],
            },
        ));
    }
    let s = sys.s_max.max(1);
    let eps = profile.eps_unweighted();
    let additive = profile.additive_coeff * log_m / (eps * eps);
    let l = if (s as f64) > 2.0 * additive {
        pow2_at_least(s as f64 / (2.0 * additive)).min(largest_pow2_le(n / 2))
    } else {
        1
    };
    if (s as f64) <= profile.direct_s_threshold(n, m) || l < 2 {
        // direct path: one potential pass over the 0/1 instance
        let w = sys.to_weighted();
        let params = pot_params(profile, m, m_hat);
        let (chi, report) = seq_derandomize(&w, &ImportanceVector::uniform(m), params)?;
        let max_ratio = report.max_ratio();
        let certified_cap =
            (profile.tail_coeff * profile.tail_coeff * log_m * s as f64).sqrt();
        return Ok((
            chi,
            UnweightedOutcome { report, max_ratio, certified_cap, path: "direct", levels: vec![] },
        ));
    }

    let (partition, urep) = multiway_unweighted(sys, l, eps, profile)?;
    let rounds = mwu_rounds_for(l, n, m);
    let per_round = l / rounds;
    let mut mwu = MwuState::new(m, profile.mwu_gap_cap.max(2.0), profile.mwu_epsilon)?;
    let mut chi_bar = vec![1i8; n];
    let mut reduced_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut clamped = 0usize;
    for round in 0..rounds {
        let weights = mwu.weights();
        let lo = round * per_round;
        let hi = lo + per_round;
        let solves: Vec<PartSolve<i64>> =
            exec::map(&partition.parts[lo..hi], |part| {
                let (sub, row_map) = sys.restrict(part)?;
                let imp = ImportanceVector::new(row_map.iter().map(|&i| weights[i]).collect())?;
                let (chi, _) = pairwise_balance(&sub, &imp)?;
                let sums = crate::instance::evaluate_sets(&sub, &chi)?;
                Ok((row_map, chi, sums))
            });
        let mut round_var = vec![0.0f64; m];
        for (off, res) in solves.into_iter().enumerate() {
            let t = lo + off;
            let (row_map, part_chi, sums) = res?;
            for (local, &j) in partition.parts[t].iter().enumerate() {
                chi_bar[j] = part_chi.chi[local];
            }
            for (r, &orig) in row_map.iter().enumerate() {
                let v = sums[r] as f64;
                if v != 0.0 {
                    reduced_rows[orig].push((t, v));
                }
                round_var[orig] += v * v;
            }
        }
        // pairwise guarantee: weighted round variance is at most the weighted
        // round intersection total, capped by the partition certificate
        let mut gaps: Vec<f64> = (0..m)
            .map(|i| round_var[i] / (per_round as f64 * urep.count_cap[i].max(1.0)))
            .collect();
        clamped += clamp_gaps(&mut gaps, profile.mwu_gap_cap.max(2.0));
        mwu.update(&gaps)?;
    }
    let chi_bar = Assignment::new(chi_bar)?;
    let reduced = WeightedSystem::from_rows(l, reduced_rows)?;
    let delta_red = reduced
        .row_norms
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1.0)
        * (1.0 + 1e-12);

    let mwu_stats = LevelStats {
        n,
        parts: l,
        mwu_rounds: rounds,
        inflation: delta_red / s as f64,
        inflation_target: (1.0 + eps).powi(2),
        target_breached: delta_red / (s as f64) > (1.0 + eps).powi(2) * (1.0 + 1e-9),
        clamped_gaps: clamped,
        mwu_avg_max: mwu.averages().averages.iter().fold(0.0f64, |a, &b| a.max(b)),
        col_total: 0,
    };

    // recurse on the mixture; fall back to a single pass when the reduced
    // instance is too lumpy for the balanced recursion
    let (signs, outcome) = if check_balanced_preconditions(&reduced, delta_red, profile).is_ok() {
        solve_balanced_weights(&reduced, delta_red, profile)?
    } else {
        let params = pot_params(profile, m, m_hat);
        let (signs, rep) = seq_derandomize(&reduced, &ImportanceVector::uniform(m), params)?;
        let c_prime_eff = rep
            .bound
            .iter()
            .map(|&b| b * b / (log_m * delta_red))
            .fold(0.0, f64::max);
        (
            signs,
            BalancedOutcome { report: rep, c_prime_eff, levels: vec![], any_breach: false },
        )
    };
    let chi = mix(&chi_bar, &partition, &signs)?;
    let sdisc: Vec<f64> = crate::instance::evaluate_sets(sys, &chi)?
        .iter()
        .map(|&x| x as f64)
        .collect();
    let norms: Vec<f64> = sys.sets.iter().map(|x| x.len() as f64).collect();
    let report = DiscReport::from_sdisc(sdisc, outcome.report.bound.clone(), &norms, m);
    if !report.certified() {
        return Err(Error::contract("unweighted solve: lifted certificate violated"));
    }
    let max_ratio = report.max_ratio();
    let certified_cap = (3.0 * outcome.c_prime_eff * log_m * s as f64).sqrt();
    let mut levels = vec![mwu_stats];
    levels.extend(outcome.levels);
    Ok((
        chi,
        UnweightedOutcome { report, max_ratio, certified_cap, path: "recursive", levels },
    ))
}

// ---------------------------------------------------------------------------
// weighted pipeline (integer domain)
// ---------------------------------------------------------------------------

/// Sparse integer matrix; all signed sums stay exact in i128 because the
/// integerization clamps magnitudes so row 1-norms fit well below 2^127.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntSystem {
    pub n: usize,
    pub rows: Vec<Vec<(usize, i128)>>,
}

impl IntSystem {
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn l1_norms(&self) -> Vec<i128> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, a)| a.abs()).sum())
            .collect()
    }

    /// Squared row masses in f64 (squares can exceed i128).
    pub fn sq_masses(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, a)| (a as f64) * (a as f64)).sum())
            .collect()
    }

    pub fn to_weighted(&self) -> Result<WeightedSystem> {
        WeightedSystem::from_rows(
            self.n,
            self.rows
                .iter()
                .map(|r| r.iter().map(|&(j, a)| (j, a as f64)).collect())
                .collect(),
        )
    }
}

/// Output of one isolation + balancing step on an integer instance.
pub struct WeightedStep {
    pub chi_bar: Assignment,
    pub fine: Partition,
    /// Per row: elements spent from the collision budget (singleton blocks).
    pub col: Vec<Vec<usize>>,
    /// Per row and fine part `t`: `sum_{j in Q_t \ COL_i} a_ij chi_j`.
    pub reduced_rows: Vec<Vec<(usize, i128)>>,
    /// Measured inflation of `sum imp (1+delta)^{|COL|}`.
    pub col_inflation: f64,
    /// Measured variance factor of the masked instance (inequality 2).
    pub variance_factor: f64,
    pub stats: LevelStats,
}

/// One level of the weighted pipeline: classify each row into heavy
/// elements (few, isolated) and light elements (sorted-magnitude chunks,
/// split evenly), run the isolation partition, then fix signs per fine part
/// under the controller. Budget spend and masked variance are measured and
/// checked against the profile targets.
pub fn mwu_weighted_step(
    sys: &IntSystem,
    imp: &[f64],
    budgets: &[usize],
    profile: &ConstantsProfile,
) -> Result<WeightedStep> {
    let n = sys.n;
    let m = sys.m();
    if imp.len() != m || budgets.len() != m {
        return Err(Error::invalid("importance/budget length mismatch"));
    }
    let masses = sys.sq_masses();
    let heavy_cap = profile.heavy_count_cap(n, m);
    let m_scale_iso = hat(m)
        * sys
            .l1_norms()
            .iter()
            .map(|&d| d as f64)
            .fold(3.0, f64::max);
    let big_floor = profile.isolation_big_floor(n, m_scale_iso);
    let t_p_planned = profile.isolation_coarse_parts(n, m_scale_iso);
    let chunk = big_floor.max(4 * t_p_planned).max(4);

    // classification
    let mut heavy: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut big_family: Vec<Vec<usize>> = Vec::new();
    for (i, row) in sys.rows.iter().enumerate() {
        let threshold = masses[i] / heavy_cap as f64;
        let mut h: Vec<usize> = row
            .iter()
            .filter(|&&(_, a)| (a as f64) * (a as f64) > threshold)
            .map(|&(j, _)| j)
            .collect();
        h.sort_unstable();
        // light elements, heaviest first, in same-magnitude-neighborhood chunks
        let mut light: Vec<(usize, i128)> = row
            .iter()
            .filter(|&&(_, a)| (a as f64) * (a as f64) <= threshold && a != 0)
            .copied()
            .collect();
        light.sort_by_key(|&(j, a)| (std::cmp::Reverse(a.abs()), j));
        let mut pos = 0usize;
        while pos < light.len() {
            let remaining = light.len() - pos;
            let take = if remaining < 2 * chunk { remaining } else { chunk };
            if take >= big_floor {
                let mut members: Vec<usize> =
                    light[pos..pos + take].iter().map(|&(j, _)| j).collect();
                members.sort_unstable();
                big_family.push(members);
            } else {
                // too few light elements to split; treat them as heavy
                h.extend(light[pos..].iter().map(|&(j, _)| j));
                h.sort_unstable();
                break;
            }
            pos += take;
        }
        heavy.push(h);
    }

    let iso = isolation_partition(n, &heavy, imp, &big_family, profile)?;
    let fine = iso.fine;
    let coarse = iso.coarse;

    // collision sets: all but the largest heavy element per fine part
    let mut col: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, h) in heavy.iter().enumerate() {
        let mut per_part: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &j in h {
            per_part.entry(fine.part_of[j]).or_default().push(j);
        }
        for (_, mut members) in per_part {
            if members.len() < 2 {
                continue;
            }
            // keep the largest-magnitude element out of the budget spend
            members.sort_by_key(|&j| {
                let idx = sys.rows[i].binary_search_by_key(&j, |&(c, _)| c).unwrap();
                (std::cmp::Reverse(sys.rows[i][idx].1.abs()), j)
            });
            col[i].extend(members.into_iter().skip(1));
        }
        col[i].sort_unstable();
        // never spend more than the remaining budget: excess collisions stay
        // in place and get charged to the measured variance factor instead
        if col[i].len() > budgets[i] {
            let keep = budgets[i];
            col[i].truncate(keep);
        }
    }

    // masked instance: light columns only, per-row scaled importances
    let light_mask: Vec<std::collections::BTreeSet<usize>> = (0..m)
        .map(|i| {
            let h: std::collections::BTreeSet<usize> = heavy[i].iter().copied().collect();
            sys.rows[i]
                .iter()
                .filter(|&&(j, a)| a != 0 && !h.contains(&j))
                .map(|&(j, _)| j)
                .collect()
        })
        .collect();
    let masked_mass: Vec<f64> = (0..m)
        .map(|i| {
            sys.rows[i]
                .iter()
                .filter(|&&(j, _)| light_mask[i].contains(&j))
                .map(|&(_, a)| (a as f64) * (a as f64))
                .sum()
        })
        .collect();
    // measured worst coarse-part masked mass per row: the gap normalizer
    let q: Vec<f64> = (0..m)
        .map(|i| {
            let mut per = vec![0.0f64; coarse.num_parts];
            for &(j, a) in &sys.rows[i] {
                if light_mask[i].contains(&j) {
                    per[coarse.part_of[j]] += (a as f64) * (a as f64);
                }
            }
            per.into_iter().fold(0.0, f64::max)
        })
        .collect();

    let m_pot_scale = hat(n) * hat(m);
    let params = pot_params(profile, m, m_pot_scale);
    let mut mwu = MwuState::new(m, profile.mwu_gap_cap.max(2.0), profile.mwu_epsilon)?;
    let mut chi_bar = vec![1i8; n];
    let mut clamped = 0usize;
    // fine parts grouped by coarse part, solved round by round
    let mut fine_by_coarse: Vec<Vec<usize>> = vec![Vec::new(); coarse.num_parts];
    for (t, part) in fine.parts.iter().enumerate() {
        if let Some(&j) = part.first() {
            fine_by_coarse[coarse.part_of[j]].push(t);
        }
    }
    for round_parts in &fine_by_coarse {
        if round_parts.is_empty() {
            continue;
        }
        let weights = mwu.weights();
        type FinePartSolve = Result<(Vec<usize>, Vec<usize>, Assignment, Vec<f64>)>;
        let solves: Vec<FinePartSolve> =
            exec::map(round_parts, |&t| {
                let part = &fine.parts[t];
                let members: std::collections::BTreeMap<usize, usize> =
                    part.iter().enumerate().map(|(s, &j)| (j, s)).collect();
                let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
                let mut row_map = Vec::new();
                for i in 0..m {
                    if masked_mass[i] <= 0.0 {
                        continue;
                    }
                    let sub: Vec<(usize, f64)> = sys.rows[i]
                        .iter()
                        .filter(|&&(j, _)| light_mask[i].contains(&j) && members.contains_key(&j))
                        .map(|&(j, a)| (members[&j], a as f64))
                        .collect();
                    if !sub.is_empty() {
                        rows.push(sub);
                        row_map.push(i);
                    }
                }
                let w = WeightedSystem::from_rows(part.len(), rows)?;
                let imp_local = ImportanceVector::new(
                    row_map
                        .iter()
                        .map(|&i| weights[i] / masked_mass[i].max(f64::MIN_POSITIVE))
                        .collect(),
                )?;
                let (chi, rep) = seq_derandomize(&w, &imp_local, params)?;
                Ok((part.clone(), row_map, chi, rep.sdisc))
            });
        let mut round_var = vec![0.0f64; m];
        for res in solves {
            let (part, row_map, part_chi, sdisc) = res?;
            for (local, &j) in part.iter().enumerate() {
                chi_bar[j] = part_chi.chi[local];
            }
            for (r, &orig) in row_map.iter().enumerate() {
                round_var[orig] += sdisc[r] * sdisc[r];
            }
        }
        let mut gaps: Vec<f64> = (0..m)
            .map(|i| {
                if q[i] > 0.0 {
                    round_var[i] / ((1.0 + 1.0 / m_pot_scale) * q[i])
                } else {
                    0.0
                }
            })
            .collect();
        clamped += clamp_gaps(&mut gaps, profile.mwu_gap_cap.max(2.0));
        mwu.update(&gaps)?;
    }
    let chi_bar = Assignment::new(chi_bar)?;

    // reduced coefficients and the masked variance factor, exact in i128
    let mut reduced_rows: Vec<Vec<(usize, i128)>> = vec![Vec::new(); m];
    let mut variance_factor = 0.0f64;
    for i in 0..m {
        let col_set: std::collections::BTreeSet<usize> = col[i].iter().copied().collect();
        let mut sums: std::collections::BTreeMap<usize, i128> = Default::default();
        let mut residual_mass = 0.0f64;
        for &(j, a) in &sys.rows[i] {
            if col_set.contains(&j) {
                continue;
            }
            *sums.entry(fine.part_of[j]).or_insert(0) += a * chi_bar.chi[j] as i128;
            residual_mass += (a as f64) * (a as f64);
        }
        let mut lhs = 0.0f64;
        for (&t, &s) in &sums {
            if s != 0 {
                reduced_rows[i].push((t, s));
            }
            lhs += (s as f64) * (s as f64);
        }
        if residual_mass > 0.0 {
            variance_factor = variance_factor.max(lhs / residual_mass);
        }
    }

    // inequality (1): budget-weighted collision inflation
    let total_imp: f64 = imp.iter().sum();
    let inflated: f64 = imp
        .iter()
        .zip(&col)
        .map(|(&w, c)| w * (1.0 + profile.delta).powi(c.len() as i32))
        .sum();
    let col_inflation = if total_imp > 0.0 { inflated / total_imp } else { 1.0 };
    let gamma1 = 1.0 + profile.isolation_inflation_target(n);
    let gamma2 = 1.0 + profile.weighted_level_target(n);
    let col_total: usize = col.iter().map(Vec::len).sum();
    let stats = LevelStats {
        n,
        parts: fine.num_parts,
        mwu_rounds: coarse.num_parts,
        inflation: variance_factor,
        inflation_target: gamma2,
        target_breached: variance_factor > gamma2 * (1.0 + 1e-9) || col_inflation > gamma1 * (1.0 + 1e-9),
        clamped_gaps: clamped,
        mwu_avg_max: mwu.averages().averages.iter().fold(0.0f64, |a, &b| a.max(b)),
        col_total,
    };
    Ok(WeightedStep {
        chi_bar,
        fine,
        col,
        reduced_rows,
        col_inflation,
        variance_factor,
        stats,
    })
}

/// Per-row block decomposition produced by the weighted recursion: the
/// budgeted blocks partition `Z_i`, and the complement is certified by the
/// base-case tail bound.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    /// Per row, per block: element lists (disjoint).
    pub blocks: Vec<Vec<Vec<usize>>>,
    /// Per row, per block: exact signed block sums.
    pub block_sums: Vec<Vec<i128>>,
    /// Per row: exact signed sum over the complement `[n] \ Z_i`.
    pub complement: Vec<i128>,
    /// Per row: certified bound on `|complement|`.
    pub cert_complement: Vec<f64>,
}

/// Outcome of the weighted recursion.
pub struct RecursiveOutcome {
    pub chi: Assignment,
    pub decomposition: BlockDecomposition,
    pub levels: Vec<LevelStats>,
    pub any_breach: bool,
}

/// Recursive weighted solver over exact integers. Each level spends part of
/// every row's collision budget on singleton blocks and hands the per-part
/// sums to the next level; the base case is a single potential pass.
pub fn solve_weighted_recursive(
    sys: &IntSystem,
    budgets: &[usize],
    profile: &ConstantsProfile,
) -> Result<RecursiveOutcome> {
    let n = sys.n;
    let m = sys.m();
    // caller's obligation: the decayed budget total leaves headroom
    debug_assert!(
        budgets
            .iter()
            .map(|&b| (1.0 - profile.budget_delta).powi(b.min(10_000) as i32))
            .sum::<f64>()
            <= 0.5 * (1.0 + 1.0 / hat(n).ln()) * (1.0 + 1e-9),
        "budget total out of range"
    );
    let base_threshold = profile.base_n_threshold(m).max(256);
    if n <= base_threshold {
        let w = sys.to_weighted()?;
        let params = pot_params(profile, m, hat(m));
        let (chi, rep) = seq_derandomize(&w, &ImportanceVector::uniform(m), params)?;
        let complement: Vec<i128> = sys
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, a)| a * chi.chi[j] as i128).sum())
            .collect();
        return Ok(RecursiveOutcome {
            chi,
            decomposition: BlockDecomposition {
                blocks: vec![Vec::new(); m],
                block_sums: vec![Vec::new(); m],
                complement,
                cert_complement: rep.bound.clone(),
            },
            levels: vec![],
            any_breach: false,
        });
    }

    let delta_b = profile.budget_delta;
    let imp: Vec<f64> = budgets
        .iter()
        .map(|&b| (1.0 - delta_b).powi(b.min(10_000) as i32))
        .collect();
    let step = mwu_weighted_step(sys, &imp, budgets, profile)?;
    let t = step.fine.num_parts;
    if t > n / 2 {
        return Err(Error::contract("weighted step failed to halve the instance"));
    }
    let budgets_rec: Vec<usize> = budgets
        .iter()
        .zip(&step.col)
        .map(|(&b, c)| b.checked_sub(c.len()).expect("budget spend capped"))
        .collect();
    let reduced = IntSystem { n: t, rows: step.reduced_rows.clone() };
    let rec = solve_weighted_recursive(&reduced, &budgets_rec, profile)?;

    // lift the assignment and the block structure
    let chi = mix(&step.chi_bar, &step.fine, &rec.chi)?;
    let mut blocks = Vec::with_capacity(m);
    let mut block_sums = Vec::with_capacity(m);
    let mut complement = Vec::with_capacity(m);
    for i in 0..m {
        let col_set: std::collections::BTreeSet<usize> = step.col[i].iter().copied().collect();
        let mut row_blocks: Vec<Vec<usize>> = Vec::new();
        let mut row_sums: Vec<i128> = Vec::new();
        for (b, rec_block) in rec.decomposition.blocks[i].iter().enumerate() {
            let mut elems = Vec::new();
            for &t_rec in rec_block {
                elems.extend(
                    step.fine.parts[t_rec]
                        .iter()
                        .copied()
                        .filter(|j| !col_set.contains(j)),
                );
            }
            elems.sort_unstable();
            row_blocks.push(elems);
            row_sums.push(rec.decomposition.block_sums[i][b]);
        }
        for &j in &step.col[i] {
            let idx = sys.rows[i].binary_search_by_key(&j, |&(c, _)| c).unwrap();
            let a = sys.rows[i][idx].1;
            row_blocks.push(vec![j]);
            row_sums.push(a * chi.chi[j] as i128);
        }
        // exact mixture identity: the lifted complement equals the reduced one
        let z: std::collections::BTreeSet<usize> =
            row_blocks.iter().flatten().copied().collect();
        let direct: i128 = sys.rows[i]
            .iter()
            .filter(|&&(j, _)| !z.contains(&j))
            .map(|&(j, a)| a * chi.chi[j] as i128)
            .sum();
        if direct != rec.decomposition.complement[i] {
            return Err(Error::contract(format!(
                "row {i}: lifted complement {direct} != reduced {}",
                rec.decomposition.complement[i]
            )));
        }
        if row_blocks.len() > budgets[i] {
            return Err(Error::contract(format!(
                "row {i}: {} blocks exceed budget {}",
                row_blocks.len(),
                budgets[i]
            )));
        }
        blocks.push(row_blocks);
        block_sums.push(row_sums);
        complement.push(direct);
    }
    let mut levels = vec![step.stats.clone()];
    levels.extend(rec.levels);
    let any_breach = step.stats.target_breached || rec.any_breach;
    Ok(RecursiveOutcome {
        chi,
        decomposition: BlockDecomposition {
            blocks,
            block_sums,
            complement,
            cert_complement: rec.decomposition.cert_complement,
        },
        levels,
        any_breach,
    })
}

/// Outcome of [`solve_weighted`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedOutcome {
    pub report: DiscReport,
    /// `max_i bound_i / sqrt(mass_i ln m̂)`.
    pub cert_constant: f64,
    pub scale_exp: u32,
    pub budget: usize,
    pub levels: Vec<LevelStats>,
    pub any_breach: bool,
}

/// Weighted set balancing on an arbitrary real matrix: drop zero rows,
/// scale and round each row to exact integers, run the budgeted recursion,
/// and assemble the per-row bound from the block sums (Cauchy-Schwarz) plus
/// the certified complement, with the rounding error folded in.
pub fn solve_weighted(
    sys: &WeightedSystem,
    config: &SolveConfig,
) -> Result<(Assignment, WeightedOutcome)> {
    let profile = &config.profile;
    let n = sys.n;
    let m = sys.m;
    let m_hat = hat(m);
    let log_m = m_hat.ln();
    if n == 0 {
        return Ok((
            Assignment { chi: vec![] },
            WeightedOutcome {
                report: empty_report(m),
                cert_constant: 0.0,
                scale_exp: 0,
                budget: 0,
                levels: vec![],
                any_breach: false,
            },
        ));
    }
    let live: Vec<usize> = (0..m).filter(|&i| sys.row_norms[i] > 0.0).collect();
    if live.is_empty() {
        let report = DiscReport::from_sdisc(vec![0.0; m], vec![0.0; m], &sys.row_norms, m);
        return Ok((
            Assignment::ones(n),
            WeightedOutcome {
                report,
                cert_constant: 0.0,
                scale_exp: 0,
                budget: 0,
                levels: vec![],
                any_breach: false,
            },
        ));
    }
    let scale_exp = profile.scale_exponent(n, config.scale_exp);
    let n_hat = hat(n);
    let target = n_hat.powi(scale_exp as i32);
    let mut factors = vec![0.0f64; m];
    let mut int_rows: Vec<Vec<(usize, i128)>> = Vec::with_capacity(live.len());
    for &i in &live {
        let amax = sys.rows[i]
            .iter()
            .map(|&(_, a)| a.abs())
            .fold(0.0f64, f64::max);
        let f = target / amax;
        factors[i] = f;
        int_rows.push(
            sys.rows[i]
                .iter()
                .filter_map(|&(j, a)| {
                    let v = (a * f).round() as i128;
                    (v != 0).then_some((j, v))
                })
                .collect(),
        );
    }
    let int_sys = IntSystem { n, rows: int_rows };

    // collision budgets: uniform, sized so the decayed total stays below
    // 0.5 (1 + 1/ln n̂)
    let delta_b = profile.budget_delta;
    let mut b = ((2.0 * live.len() as f64).ln() / -(1.0 - delta_b).ln()).ceil() as usize;
    while live.len() as f64 * (1.0 - delta_b).powi(b as i32) > 0.5 * (1.0 + 1.0 / n_hat.ln()) {
        b += 1;
    }
    let budgets = vec![b; live.len()];
    let rec = solve_weighted_recursive(&int_sys, &budgets, profile)?;

    // certificates in original units
    let sdisc = evaluate_weighted(sys, &rec.chi)?;
    let mut bound = vec![0.0f64; m];
    for (k, &i) in live.iter().enumerate() {
        let blocks_sq: f64 = rec.decomposition.block_sums[k]
            .iter()
            .map(|&s| (s as f64) * (s as f64))
            .sum();
        let nblocks = rec.decomposition.block_sums[k].len() as f64;
        let cert_int = (nblocks * blocks_sq).sqrt() + rec.decomposition.cert_complement[k];
        let rounding = sys.rows[i].len() as f64 * 0.5;
        bound[i] = (cert_int + rounding) / factors[i];
    }
    let report = DiscReport::from_sdisc(sdisc, bound, &sys.row_norms, m);
    if !report.certified() {
        return Err(Error::contract("weighted solve: certificate violated"));
    }
    let cert_constant = (0..m)
        .map(|i| {
            if sys.row_norms[i] > 0.0 {
                report.bound[i] / (sys.row_norms[i] * log_m).sqrt()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok((
        rec.chi,
        WeightedOutcome {
            report,
            cert_constant,
            scale_exp,
            budget: b,
            levels: rec.levels,
            any_breach: rec.any_breach,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brute_force_min_disc;
    use crate::gen::{random_set_system, random_weighted_system, CounterRng, WeightKind};

    fn profile() -> ConstantsProfile {
        ConstantsProfile::practical()
    }

    #[test]
    fn warmup_sqrt_tiny_and_full_set() {
        let sys = SetSystem::new(1, vec![vec![0]]).unwrap();
        let (_, rep) = warmup_sqrt(&sys, &profile()).unwrap();
        assert_eq!(rep.report.disc[0], 1.0);

        let sys = SetSystem::new(16, vec![(0..16).collect()]).unwrap();
        let (chi, rep) = warmup_sqrt(&sys, &profile()).unwrap();
        assert!(rep.report.certified());
        let direct: i64 = chi.chi.iter().map(|&c| c as i64).sum();
        assert_eq!(direct.abs() as f64, rep.report.disc[0]);
    }

    #[test]
    fn warmup_sqrt_random_certified() {
        let rng = CounterRng::new(2);
        let sys = random_set_system(256, 20, 40, &rng);
        let (chi, rep) = warmup_sqrt(&sys, &profile()).unwrap();
        assert!(rep.report.certified());
        // the report reflects the true assignment
        let again = crate::instance::evaluate_sets(&sys, &chi).unwrap();
        for (i, &s) in again.iter().enumerate() {
            assert_eq!(s as f64, rep.report.sdisc[i]);
        }
    }

    #[test]
    fn warmup_optimal_small_boundary_and_group_degenerate() {
        let sys = SetSystem::new(4, vec![vec![0, 1, 2, 3]]).unwrap();
        let (_, rep) = warmup_sqrt_optimal(&sys, 4, &profile()).unwrap();
        assert!(rep.report.certified());
        assert!(warmup_sqrt_optimal(&sys, 2, &profile()).is_err());
    }

    #[test]
    fn warmup_optimal_random_certified() {
        let rng = CounterRng::new(9);
        let sys = random_set_system(1024, 32, 64, &rng);
        let (_, rep) = warmup_sqrt_optimal(&sys, 64, &profile()).unwrap();
        assert!(rep.report.certified());
        assert!(rep.k_constant.is_finite());
    }

    #[test]
    fn recursion_creator_verifies_preconditions() {
        let rng = CounterRng::new(12);
        let sys = random_weighted_system(64, 4, 64, WeightKind::PlusMinusOne, &rng);
        // too tight a budget
        assert!(recursion_creator(&sys, 10.0, None, &profile()).is_err());
    }

    #[test]
    fn recursion_creator_uniform_row() {
        let rows = vec![(0..64).map(|j| (j, 1.0)).collect::<Vec<_>>()];
        let sys = WeightedSystem::from_rows(64, rows).unwrap();
        let level = recursion_creator(&sys, 64.0, None, &profile()).unwrap();
        assert!(level.partition.num_parts <= 32);
        // (A): measured total variance within the declared target
        assert!(
            level.stats.inflation <= level.stats.inflation_target * (1.0 + 1e-9),
            "inflation {} target {}",
            level.stats.inflation,
            level.stats.inflation_target
        );
        // mixture identity: reduced coefficients are the per-part sums
        for (t, part) in level.partition.parts.iter().enumerate() {
            let s: f64 = part.iter().map(|&j| level.chi_bar.chi[j] as f64).sum();
            let coeff = level.reduced.rows[0]
                .iter()
                .find(|&&(c, _)| c == t)
                .map(|&(_, v)| v)
                .unwrap_or(0.0);
            assert!((coeff - s).abs() < 1e-9, "part {t}");
        }
    }

    #[test]
    fn recursion_creator_flat_instance_meets_tight_target() {
        // m = 16, n = 4096: total per-row variance after one level stays
        // within (1 + 1/(10 ln^2 n)) of the budget
        let rng = CounterRng::new(900);
        let sys = random_weighted_system(4096, 16, 512, WeightKind::PlusMinusOne, &rng);
        let delta = sys.row_norms.iter().cloned().fold(0.0f64, f64::max);
        let level = recursion_creator(&sys, delta, None, &profile()).unwrap();
        let target = 1.0 + 1.0 / (10.0 * (4096f64).ln().powi(2));
        assert!(
            level.stats.inflation <= target,
            "(A) slack {} above {target}",
            level.stats.inflation
        );
        assert!(!level.stats.target_breached);
    }

    #[test]
    fn balanced_solve_base_case_matches_potential() {
        let rng = CounterRng::new(3);
        let sys = random_weighted_system(32, 8, 16, WeightKind::PlusMinusOne, &rng);
        let delta = sys.row_norms.iter().cloned().fold(0.0f64, f64::max);
        let (_, out) = solve_balanced_weights(&sys, delta, &profile()).unwrap();
        assert!(out.levels.is_empty(), "n=32 sits below the base threshold");
        assert!(out.report.certified());
    }

    #[test]
    fn balanced_solve_recursive_levels_certified() {
        let rng = CounterRng::new(4);
        let sys = random_weighted_system(512, 16, 256, WeightKind::PlusMinusOne, &rng);
        let delta = sys.row_norms.iter().cloned().fold(0.0f64, f64::max);
        let (chi, out) = solve_balanced_weights(&sys, delta, &profile()).unwrap();
        assert!(!out.levels.is_empty(), "recursion should fire at n=512");
        assert!(out.report.certified());
        let direct = evaluate_weighted(&sys, &chi).unwrap();
        for (i, &s) in direct.iter().enumerate() {
            assert!((s - out.report.sdisc[i]).abs() < 1e-6, "row {i}");
        }
    }

    #[test]
    fn unweighted_single_even_set() {
        let sys = SetSystem::new(8, vec![(0..8).collect()]).unwrap();
        let (_, out) = solve_unweighted(&sys, &profile()).unwrap();
        assert!(out.report.certified());
        let (_, opt) = brute_force_min_disc(&sys).unwrap();
        assert!(out.report.max_disc() >= opt as f64);
    }

    #[test]
    fn unweighted_small_vs_brute_force() {
        let rng = CounterRng::new(8);
        for trial in 0..10 {
            let sys = random_set_system(16, 6, 8, &rng.derive(trial));
            let (_, out) = solve_unweighted(&sys, &profile()).unwrap();
            let (_, opt) = brute_force_min_disc(&sys).unwrap();
            assert!(out.report.max_disc() >= opt as f64, "solver beat the optimum");
            assert!(out.report.certified());
        }
    }

    #[test]
    fn unweighted_recursive_path_fires_and_certifies() {
        let rng = CounterRng::new(14);
        let sys = random_set_system(4096, 8, 2048, &rng);
        let (chi, out) = solve_unweighted(&sys, &profile()).unwrap();
        assert_eq!(out.path, "recursive");
        assert!(out.report.certified());
        assert!(out.max_ratio <= 4.0, "measured ratio {}", out.max_ratio);
        let direct = crate::instance::evaluate_sets(&sys, &chi).unwrap();
        for (i, &s) in direct.iter().enumerate() {
            assert_eq!(s as f64, out.report.sdisc[i]);
        }
    }

    #[test]
    fn weighted_diagonal_matrix() {
        let rows: Vec<Vec<(usize, f64)>> = (0..8).map(|j| vec![(j, (j + 1) as f64)]).collect();
        let sys = WeightedSystem::from_rows(8, rows).unwrap();
        let config = SolveConfig::new(profile());
        let (_, out) = solve_weighted(&sys, &config).unwrap();
        for (i, &d) in out.report.disc.iter().enumerate() {
            assert!((d - (i + 1) as f64).abs() < 1e-9);
            assert!(d <= out.report.bound[i] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn weighted_zero_one_matches_unweighted_scale() {
        let rng = CounterRng::new(6);
        let sys = random_set_system(16, 6, 8, &rng);
        let w = sys.to_weighted();
        let config = SolveConfig::new(profile());
        let (_, wout) = solve_weighted(&w, &config).unwrap();
        let (_, uout) = solve_unweighted(&sys, &profile()).unwrap();
        assert!(wout.report.certified());
        // same certificate family: neither result strays beyond 2x the other's
        // certificate scale
        assert!(wout.report.max_disc() <= 2.0 * uout.certified_cap.max(uout.report.max_disc()).max(1.0));
    }

    #[test]
    fn weighted_gaussian_certified_with_levels() {
        let rng = CounterRng::new(7);
        let sys = random_weighted_system(1024, 16, 256, WeightKind::Gauss, &rng);
        let config = SolveConfig::new(profile());
        let (chi, out) = solve_weighted(&sys, &config).unwrap();
        assert!(!out.levels.is_empty(), "recursion should fire at n=1024");
        assert!(out.report.certified());
        assert!(out.cert_constant <= 50.0, "certificate constant {}", out.cert_constant);
        let direct = evaluate_weighted(&sys, &chi).unwrap();
        for (i, &s) in direct.iter().enumerate() {
            assert!((s - out.report.sdisc[i]).abs() < 1e-6, "row {i}");
        }
    }

    #[test]
    fn weighted_power_law_budget_bookkeeping() {
        let rng = CounterRng::new(11);
        let sys = random_weighted_system(1024, 12, 200, WeightKind::PowerLaw, &rng);
        let config = SolveConfig::new(profile());
        let int_budget = {
            let (_, out) = solve_weighted(&sys, &config).unwrap();
            assert!(out.report.certified());
            out.budget
        };
        assert!(int_budget >= 32, "budgets scale with ln m");
    }

    #[test]
    fn weighted_step_uniform_long_rows_have_no_heavy() {
        let rows: Vec<Vec<(usize, i128)>> =
            (0..4).map(|_| (0..512).map(|j| (j, 1000i128)).collect()).collect();
        let sys = IntSystem { n: 512, rows };
        let budgets = vec![100; 4];
        let imp = vec![1.0; 4];
        let step = mwu_weighted_step(&sys, &imp, &budgets, &profile()).unwrap();
        assert!(step.col.iter().all(Vec::is_empty), "uniform rows spend no budget");
        assert!(step.fine.num_parts <= 256);
    }

    #[test]
    fn weighted_step_huge_entries_isolated_or_budgeted() {
        let rng = CounterRng::new(13);
        let mut rows: Vec<Vec<(usize, i128)>> = vec![(0..1000)
            .map(|j| (j, 1 + rng.below(j as u64, 3) as i128))
            .collect()];
        rows[0][10].1 = 1_000_000;
        rows[0][500].1 = 2_000_000;
        rows[0][900].1 = 1_500_000;
        let sys = IntSystem { n: 1000, rows };
        let step = mwu_weighted_step(&sys, &[1.0], &[50], &profile()).unwrap();
        // the three huge entries either landed in distinct fine parts or in
        // the collision set
        let parts: Vec<usize> = [10usize, 500, 900]
            .iter()
            .filter(|j| !step.col[0].contains(j))
            .map(|&j| step.fine.part_of[j])
            .collect();
        let mut dedup = parts.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(parts.len(), dedup.len(), "colliding huge entries must be budgeted");
        assert!(step.col_inflation <= 1.0 + profile().isolation_inflation_target(1000) + 1e-9);
    }
}
