//! Multiplicative weights update controller.
//!
//! An oracle interacts with `m` constraints over rounds. Each round it
//! returns per-constraint gaps in `[0, W]` subject to the weighted bound
//! `sum_i imp(i) gap(i) <= sum_i imp(i)`. Importances update as
//! `imp(i) <- imp(i) (1 + eta gap(i))` with `eta = epsilon / (3 W)`; after
//! `T >= ceil(9 W ln m / epsilon^2)` rounds every constraint's average gap
//! is at most `1 + epsilon`.
//!
//! Importances are stored in the log domain throughout, so `(1 + eta W)^T`
//! cannot overflow; consumers read scale-normalized linear weights (every
//! guarantee downstream is homogeneous in the importances).

use crate::error::{Error, Result};

/// Rounds needed for the average-gap guarantee: `ceil(9 W ln m / eps^2)`.
pub fn required_rounds(w: f64, epsilon: f64, m: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1/2]")));
    }
    if !(w > 0.0) || !(m >= 2.0) {
        return Err(Error::invalid("need W > 0 and m >= 2"));
    }
    Ok((9.0 * w * m.ln() / (epsilon * epsilon)).ceil() as usize)
}

#[derive(Debug, Clone)]
pub struct MwuState {
    /// Linear importances divided by `exp(shift)`; the pair is the log-domain
    /// representation `ln imp(i) = shift + ln lin(i)`, renormalized whenever
    /// the linear parts approach overflow.
    lin: Vec<f64>,
    shift: f64,
    eta: f64,
    w: f64,
    epsilon: f64,
    round: usize,
    gap_sums: Vec<f64>,
    /// Count of rounds where the oracle inequality was tight to the limit.
    pub clamped_rounds: usize,
}

/// Per-constraint verdicts from [`MwuState::certify`].
#[derive(Debug, Clone)]
pub struct MwuCertificate {
    pub averages: Vec<f64>,
    pub pass: Vec<bool>,
    pub all_pass: bool,
}

impl MwuState {
    pub fn new(m: usize, w: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1/2]")));
        }
        if !(w > 0.0) {
            return Err(Error::invalid("gap ceiling W must be positive"));
        }
        Ok(MwuState {
            lin: vec![1.0; m],
            shift: 0.0,
            eta: epsilon / (3.0 * w),
            w,
            epsilon,
            round: 0,
            gap_sums: vec![0.0; m],
            clamped_rounds: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.lin.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Linear importances normalized so the largest is 1.
    pub fn weights(&self) -> Vec<f64> {
        let top = self.lin.iter().fold(0.0f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
        self.lin.iter().map(|&l| l / top).collect()
    }

    /// One round: validates the oracle contract, multiplies importances,
    /// accumulates gap sums.
    pub fn update(&mut self, gaps: &[f64]) -> Result<()> {
        if gaps.len() != self.lin.len() {
            return Err(Error::invalid("gap vector length mismatch"));
        }
        for (i, &g) in gaps.iter().enumerate() {
            if !(g >= 0.0 && g <= self.w * (1.0 + 1e-12)) {
                return Err(Error::contract(format!(
                    "gap[{i}] = {g} outside [0, W = {}]",
                    self.w
                )));
            }
        }
        // oracle inequality, in scale-free form
        let total: f64 = self.lin.iter().sum();
        let spent: f64 = self.lin.iter().zip(gaps).map(|(&w, &g)| w * g).sum();
        if spent > total * (1.0 + 1e-9) {
            return Err(Error::contract(format!(
                "oracle inequality violated: sum imp*gap = {spent} > sum imp = {total}"
            )));
        }
        if spent >= total * (1.0 - 1e-12) {
            self.clamped_rounds += 1;
        }
        let mut top = 0.0f64;
        for (i, &g) in gaps.iter().enumerate() {
            self.lin[i] *= 1.0 + self.eta * g;
            top = top.max(self.lin[i]);
            self.gap_sums[i] += g;
        }
        if top > 1e280 {
            for l in &mut self.lin {
                *l /= top;
            }
            self.shift += top.ln();
        }
        self.round += 1;
        // potential bound: sum_i imp(i) <= m * exp(eta * t)
        let bound = (self.m() as f64).ln() + self.eta * self.round as f64;
        let lse = self.shift + self.lin.iter().sum::<f64>().max(f64::MIN_POSITIVE).ln();
        debug_assert!(
            lse <= bound + 1e-9,
            "importance potential {lse} exceeds ln(m) + eta t = {bound}"
        );
        Ok(())
    }

    /// Average gaps after the required number of rounds.
    pub fn certify(&self, m_for_rounds: f64) -> Result<MwuCertificate> {
        let need = required_rounds(self.w, self.epsilon, m_for_rounds)?;
        if self.round < need {
            return Err(Error::Stale(format!(
                "certify called after {} rounds, {need} required",
                self.round
            )));
        }
        Ok(self.averages())
    }

    /// Average gaps so far, with pass flags against `1 + epsilon`. Unlike
    /// [`MwuState::certify`] this never errs; callers that stop early report
    /// the measured averages instead of the a-priori guarantee.
    pub fn averages(&self) -> MwuCertificate {
        let t = self.round.max(1) as f64;
        let averages: Vec<f64> = self.gap_sums.iter().map(|&s| s / t).collect();
        let pass: Vec<bool> = averages
            .iter()
            .map(|&a| a <= (1.0 + self.epsilon) * (1.0 + 1e-9))
            .collect();
        let all_pass = pass.iter().all(|&p| p);
        MwuCertificate { averages, pass, all_pass }
    }
}
