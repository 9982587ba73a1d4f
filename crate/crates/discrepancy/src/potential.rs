//! Sequential derandomization by conditional expectations.
//!
//! Signs are fixed one column at a time, choosing the branch that does not
//! increase a composite potential with three ingredients per constraint:
//! an importance-weighted average term (running signed sum squared plus
//! remaining mass) and exponential upper/lower tail terms. Keeping the
//! potential at most its initial value certifies, at the end,
//!
//! * `sum_i imp(i) disc_i^2 <= (1 + 1/M) sum_i imp(i) sum_j a_ij^2`, and
//! * `disc_i <= tail_coeff * sqrt(sum_j a_ij^2 * ln M)` for every row.
//!
//! Tail terms are tracked both as log-domain ratios against their initial
//! values (they stay within `M^O(1)` of 1, but the raw products would
//! overflow) and as linear ratios for cheap per-column deltas.
//!
//! The two branch potentials at a column differ from the current value by
//! `+D` and `-D` for a single computed `D`, so the chosen branch never
//! exceeds the current potential even in floating arithmetic, and
//! `0.5 (Pot(+1) + Pot(-1)) = Pot(prev)` holds exactly.

use crate::error::{Error, Result};
use crate::exec;
use crate::instance::{hat, Assignment, DiscReport, ImportanceVector, WeightedSystem};

/// Knobs for the potential. `tail_coeff` and `lambda_coeff` default to the
/// conservative 1000/100 pairing; solvers pass a tighter pairing (the
/// certified bound always uses the configured values).
#[derive(Debug, Clone, Copy)]
pub struct PotentialParams {
    /// Tail-bound scale; must satisfy `M >= max(m, 2)`.
    pub m_scale: f64,
    pub tail_coeff: f64,
    pub lambda_coeff: f64,
}

impl PotentialParams {
    pub fn new(m: usize) -> Self {
        PotentialParams { m_scale: hat(m), tail_coeff: 1000.0, lambda_coeff: 100.0 }
    }

    /// The pairing solvers use internally: same certificates, much tighter
    /// constants (valid whenever `tail^2 (lambda-2) / (2 lambda^2) >= 4` and
    /// `lambda >= 4`; see `choose`'s tail argument).
    pub fn tight(m: usize) -> Self {
        PotentialParams { m_scale: hat(m), tail_coeff: 8.0, lambda_coeff: 4.0 }
    }

    pub fn with_scale(mut self, m_scale: f64) -> Self {
        self.m_scale = m_scale;
        self
    }

    pub fn with_tail_coeff(mut self, tail_coeff: f64) -> Self {
        self.tail_coeff = tail_coeff;
        self
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !(self.m_scale >= hat(m)) {
            return Err(Error::invalid(format!(
                "potential scale M = {} must be >= max(m, 2) = {}",
                self.m_scale,
                hat(m)
            )));
        }
        if self.tail_coeff <= 0.0 || self.lambda_coeff <= 0.0 {
            return Err(Error::invalid("potential coefficients must be positive"));
        }
        Ok(())
    }
}

/// Incremental potential state over a column-major instance view.
pub struct PotentialState {
    params: PotentialParams,
    m: usize,
    /// Column-major entries `(row, value)`.
    cols: Vec<Vec<(usize, f64)>>,
    /// Average-term weights (uniform when the caller's importances are all 0).
    weights: Vec<f64>,
    /// Per-row tail rate `lambda_i`; 0 for rows with no mass.
    lambda: Vec<f64>,
    /// Running signed sums.
    sums: Vec<f64>,
    /// Remaining squared mass per row.
    remaining: Vec<f64>,
    /// Log-domain tail ratios `ln(Phi_j / Phi_0)`.
    log_up: Vec<f64>,
    log_low: Vec<f64>,
    /// Linear tail ratios, kept alongside for O(touched) deltas.
    lin_up: Vec<f64>,
    lin_low: Vec<f64>,
    /// `ln Phi_0` per row (identical for upper and lower).
    log_phi0: Vec<f64>,
    /// Normalizer of the average term, `sum_i w_i * mass_i` (0 if no mass).
    a0: f64,
    /// Current composite potential.
    pot: f64,
    /// Columns fixed so far.
    fixed: usize,
}

impl PotentialState {
    pub fn new(sys: &WeightedSystem, imp: &ImportanceVector, params: PotentialParams) -> Result<Self> {
        if imp.imp.len() != sys.m {
            return Err(Error::invalid(format!(
                "importance length {} != row count {}",
                imp.imp.len(),
                sys.m
            )));
        }
        params.validate(sys.m)?;
        let total_imp: f64 = imp.imp.iter().sum();
        let weights: Vec<f64> = if total_imp > 0.0 {
            imp.imp.clone()
        } else {
            vec![1.0; sys.m]
        };
        let ln_m_scale = params.m_scale.ln();
        let lambda: Vec<f64> = sys
            .row_norms
            .iter()
            .map(|&q| {
                if q > 0.0 {
                    // lambda = Delta / (lambda_coeff * mass), Delta = tail_coeff sqrt(mass ln M)
                    params.tail_coeff * (q * ln_m_scale).sqrt() / (params.lambda_coeff * q)
                } else {
                    0.0
                }
            })
            .collect();
        let log_phi0: Vec<f64> = sys
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let l = lambda[i];
                exec::sum_by(row, |&(_, a)| {
                    let y = l * a;
                    (1.0 + y * y).ln()
                })
            })
            .collect();
        let a0 = weights
            .iter()
            .zip(&sys.row_norms)
            .map(|(&w, &q)| w * q)
            .sum::<f64>();
        let m = sys.m;
        let pot = 1.0 + 1.0 / params.m_scale;
        Ok(PotentialState {
            params,
            m,
            cols: sys.columns(),
            weights,
            lambda,
            sums: vec![0.0; m],
            remaining: sys.row_norms.clone(),
            log_up: vec![0.0; m],
            log_low: vec![0.0; m],
            lin_up: vec![1.0; m],
            lin_low: vec![1.0; m],
            log_phi0,
            a0,
            pot,
            fixed: 0,
        })
    }

    pub fn pot(&self) -> f64 {
        self.pot
    }

    pub fn n(&self) -> usize {
        self.cols.len()
    }

    /// `ln Phi_0` of a row's tail term, for bound checks.
    pub fn log_phi0(&self, i: usize) -> f64 {
        self.log_phi0[i]
    }

    /// The signed half-gap between the two branch potentials at column `j`:
    /// fixing `chi_j = c` moves the potential by exactly `c * D`.
    pub fn branch_delta(&self, j: usize) -> f64 {
        let tail_scale = 1.0 / (2.0 * self.m as f64 * self.params.m_scale);
        let col = &self.cols[j];
        let avg = if self.a0 > 0.0 {
            exec::sum_by(col, |&(i, a)| self.weights[i] * 2.0 * self.sums[i] * a) / self.a0
        } else {
            0.0
        };
        let tail = exec::sum_by(col, |&(i, a)| {
            let y = self.lambda[i] * a;
            let r = y / (1.0 + y * y);
            r * (self.lin_up[i] - self.lin_low[i])
        });
        avg + tail_scale * tail
    }

    /// Sign whose branch potential is `<= Pot(prev)`, ties toward `+1`.
    pub fn choose(&self, j: usize) -> i8 {
        if self.branch_delta(j) > 0.0 {
            -1
        } else {
            1
        }
    }

    /// Fixes `chi_j = chi` and updates every touched row in O(touched).
    pub fn step(&mut self, j: usize, chi: i8) {
        debug_assert!(chi == 1 || chi == -1);
        let d = self.branch_delta(j);
        self.pot += chi as f64 * d;
        let c = chi as f64;
        // split borrows: the column list is immutable while rows update
        let col = std::mem::take(&mut self.cols[j]);
        for &(i, a) in &col {
            self.sums[i] += a * c;
            self.remaining[i] -= a * a;
            let y = self.lambda[i] * a;
            let r = y / (1.0 + y * y);
            debug_assert!(r.abs() <= 0.5 + 1e-12, "per-step factor stays positive");
            self.log_up[i] += (r * c).ln_1p();
            self.log_low[i] += (-r * c).ln_1p();
            self.lin_up[i] *= 1.0 + r * c;
            self.lin_low[i] *= 1.0 - r * c;
        }
        self.cols[j] = col;
        self.fixed += 1;
    }

    /// Recomputes the composite potential from per-row state, ignoring the
    /// incrementally tracked value. Used as a consistency oracle in tests.
    pub fn pot_from_scratch(&self) -> f64 {
        let avg = if self.a0 > 0.0 {
            let num: f64 = (0..self.m)
                .map(|i| self.weights[i] * (self.sums[i] * self.sums[i] + self.remaining[i]))
                .sum();
            num / self.a0
        } else {
            1.0
        };
        let tail_scale = 1.0 / (2.0 * self.m as f64 * self.params.m_scale);
        let tails: f64 = (0..self.m)
            .map(|i| self.log_up[i].exp() + self.log_low[i].exp())
            .sum();
        avg + tail_scale * tails
    }

    pub fn signed_sums(&self) -> &[f64] {
        &self.sums
    }
}

/// Fixes all columns greedily and reports per-row discrepancies with the
/// certified tail bounds `Delta_i = tail_coeff * sqrt(mass_i * ln M)`.
pub fn seq_derandomize(
    sys: &WeightedSystem,
    imp: &ImportanceVector,
    params: PotentialParams,
) -> Result<(Assignment, DiscReport)> {
    let mut state = PotentialState::new(sys, imp, params)?;
    let mut chi = Vec::with_capacity(sys.n);
    for j in 0..sys.n {
        let c = state.choose(j);
        state.step(j, c);
        chi.push(c);
    }
    let assignment = Assignment { chi };
    let ln_m_scale = params.m_scale.ln();
    let bound: Vec<f64> = sys
        .row_norms
        .iter()
        .map(|&q| params.tail_coeff * (q * ln_m_scale).sqrt())
        .collect();
    let sdisc = state.sums.clone();
    Ok((
        assignment,
        DiscReport::from_sdisc(sdisc, bound, &sys.row_norms, sys.m),
    ))
}

/// Convenience: tight coefficients, uniform importances, `M = max(m, 2)`.
pub fn seq_derandomize_uniform(sys: &WeightedSystem) -> Result<(Assignment, DiscReport)> {
    seq_derandomize(
        sys,
        &ImportanceVector::uniform(sys.m),
        PotentialParams::tight(sys.m),
    )
}

/// Verifies both certificates on a finished solve; returns the measured
/// average-guarantee slack `sum imp disc^2 / sum imp mass`.
pub fn verify_guarantees(
    sys: &WeightedSystem,
    imp: &ImportanceVector,
    params: PotentialParams,
    report: &DiscReport,
) -> Result<f64> {
    let ln_m_scale = params.m_scale.ln();
    for (i, (&d, &q)) in report.disc.iter().zip(&sys.row_norms).enumerate() {
        let delta = params.tail_coeff * (q * ln_m_scale).sqrt();
        if d > delta * (1.0 + 1e-9) {
            return Err(Error::contract(format!(
                "row {i}: disc {d} exceeds tail bound {delta}"
            )));
        }
    }
    let total_imp: f64 = imp.imp.iter().sum();
    let w: Vec<f64> = if total_imp > 0.0 { imp.imp.clone() } else { vec![1.0; sys.m] };
    let lhs: f64 = report
        .disc
        .iter()
        .zip(&w)
        .map(|(&d, &wi)| wi * d * d)
        .sum();
    let rhs: f64 = sys.row_norms.iter().zip(&w).map(|(&q, &wi)| wi * q).sum();
    if rhs > 0.0 && lhs > (1.0 + 1.0 / params.m_scale) * rhs * (1.0 + 1e-9) {
        return Err(Error::contract(format!(
            "average guarantee violated: {lhs} > (1 + 1/M) * {rhs}"
        )));
    }
    Ok(if rhs > 0.0 { lhs / rhs } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_weighted_system, CounterRng, WeightKind};

    fn params_for(sys: &WeightedSystem) -> PotentialParams {
        PotentialParams::tight(sys.m)
    }

    #[test]
    fn two_ones_cancel() {
        // branch comparison at the second column must pick the opposite sign
        let sys = WeightedSystem::from_triples(2, 1, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let (chi, rep) = seq_derandomize(&sys, &ImportanceVector::uniform(1), params_for(&sys)).unwrap();
        assert_eq!(chi.chi[0], 1, "tie at the first column resolves to +1");
        assert_eq!(chi.chi[1], -1);
        assert_eq!(rep.disc[0], 0.0);
    }

    #[test]
    fn forced_single_entry() {
        let sys = WeightedSystem::from_triples(1, 1, &[(0, 0, 1.0)]).unwrap();
        let params = PotentialParams::new(1); // default 1000/100 pairing
        let (_, rep) = seq_derandomize(&sys, &ImportanceVector::uniform(1), params).unwrap();
        assert_eq!(rep.disc[0], 1.0);
        let expect = 1000.0 * (2.0f64.ln()).sqrt();
        assert!((rep.bound[0] - expect).abs() < 1e-12);
        assert!(rep.bound[0] >= 1.0);
    }

    #[test]
    fn all_zero_column_keeps_state() {
        let sys = WeightedSystem::from_rows(3, vec![vec![(0, 1.0), (2, -2.0)]]).unwrap();
        let mut st = PotentialState::new(&sys, &ImportanceVector::uniform(1), params_for(&sys)).unwrap();
        st.step(0, 1);
        let before = st.pot();
        let scratch_before = st.pot_from_scratch();
        st.step(1, 1); // column 1 touches nothing
        assert_eq!(st.pot(), before);
        assert_eq!(st.pot_from_scratch(), scratch_before);
    }

    #[test]
    fn single_row_factor_matches_formula() {
        // lambda * a = 0.5 and chi = +1 multiplies the upper ratio by 1.75/1.25
        let sys = WeightedSystem::from_rows(1, vec![vec![(0, 1.0)]]).unwrap();
        let mut params = params_for(&sys);
        // pick coefficients so lambda = 0.5 exactly: lambda = t*sqrt(ln M)/l
        params.tail_coeff = 1.0;
        params.lambda_coeff = 2.0 * (params.m_scale.ln()).sqrt();
        let mut st = PotentialState::new(&sys, &ImportanceVector::uniform(1), params).unwrap();
        st.step(0, 1);
        let got = st.log_up[0].exp();
        assert!((got - 1.75 / 1.25).abs() < 1e-12);
    }

    #[test]
    fn step_agrees_with_scratch_recompute() {
        let rng = CounterRng::new(42);
        let sys = random_weighted_system(24, 10, 8, WeightKind::Gauss, &rng);
        let mut st = PotentialState::new(&sys, &ImportanceVector::uniform(10), params_for(&sys)).unwrap();
        for j in 0..sys.n {
            let c = st.choose(j);
            st.step(j, c);
            let scratch = st.pot_from_scratch();
            let rel = (st.pot() - scratch).abs() / scratch.abs().max(1.0);
            assert!(rel < 1e-9, "col {j}: incremental {} vs scratch {scratch}", st.pot());
        }
    }

    #[test]
    fn branch_average_identity_and_monotone_choice() {
        let rng = CounterRng::new(7);
        for trial in 0..100 {
            let sys = random_weighted_system(12, 6, 5, WeightKind::Gauss, &rng.derive(trial));
            let imp = ImportanceVector::new(
                (0..6).map(|i| rng.derive(trial).f64(i as u64) * 3.0).collect(),
            )
            .unwrap();
            let mut st = PotentialState::new(&sys, &imp, params_for(&sys)).unwrap();
            for j in 0..sys.n {
                let d = st.branch_delta(j);
                let prev = st.pot();
                // branches are prev + d and prev - d; recombining in floats
                // costs at most an ulp
                let plus = prev + d;
                let minus = prev - d;
                let rel = (0.5 * (plus + minus) - prev).abs() / prev.abs().max(1.0);
                assert!(rel < 1e-12, "identity off by {rel}");
                assert!(plus.min(minus) <= prev);
                let c = st.choose(j);
                st.step(j, c);
                assert!(st.pot() <= prev, "potential must not increase");
            }
            assert!(st.pot() <= 1.0 + 1.0 / params_for(&sys).m_scale);
        }
    }

    #[test]
    fn guarantees_hold_on_random_pm1_instances() {
        let rng = CounterRng::new(99);
        let sys = random_weighted_system(10, 8, 6, WeightKind::PlusMinusOne, &rng);
        let imp = ImportanceVector::uniform(8);
        let params = params_for(&sys);
        let (_, rep) = seq_derandomize(&sys, &imp, params).unwrap();
        verify_guarantees(&sys, &imp, params, &rep).unwrap();
        // recompute Pot_n from scratch after the solve stays below Pot_0
        let mut st = PotentialState::new(&sys, &imp, params).unwrap();
        for j in 0..sys.n {
            let c = st.choose(j);
            st.step(j, c);
        }
        assert!(st.pot_from_scratch() <= (1.0 + 1.0 / params.m_scale) * (1.0 + 1e-12));
    }

    #[test]
    fn adversarial_importances_keep_average_guarantee() {
        let rng = CounterRng::new(5);
        for trial in 0..20 {
            let sys = random_weighted_system(16, 8, 6, WeightKind::Gauss, &rng.derive(trial));
            let imp = ImportanceVector::new(
                (0..8)
                    .map(|i| rng.derive(1000 + trial).f64(i as u64).powi(4) * 100.0)
                    .collect(),
            )
            .unwrap();
            let params = params_for(&sys);
            let (_, rep) = seq_derandomize(&sys, &imp, params).unwrap();
            verify_guarantees(&sys, &imp, params, &rep).unwrap();
        }
    }

    #[test]
    fn initial_tail_potential_within_scale_bound() {
        let rng = CounterRng::new(13);
        let sys = random_weighted_system(30, 5, 20, WeightKind::LogNormal, &rng);
        let params = PotentialParams::new(sys.m);
        let st = PotentialState::new(&sys, &ImportanceVector::uniform(5), params).unwrap();
        let cap = 100.0 * params.m_scale.ln();
        for i in 0..sys.m {
            assert!(st.log_phi0(i) <= cap + 1e-9, "row {i}: {}", st.log_phi0(i));
        }
    }

    #[test]
    fn zero_importances_fall_back_to_uniform_average() {
        let sys = WeightedSystem::from_triples(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let imp = ImportanceVector::new(vec![0.0, 0.0]).unwrap();
        let (_, rep) = seq_derandomize(&sys, &imp, params_for(&sys)).unwrap();
        assert!(rep.certified());
    }

    #[test]
    fn rejects_nonfinite_importance() {
        assert!(ImportanceVector::new(vec![f64::NAN]).is_err());
        assert!(ImportanceVector::new(vec![-1.0]).is_err());
    }
}
