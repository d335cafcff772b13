//! Two-part proposal for the indicator vector.
//!
//! `q1` draws a new active count `K†` from a Binomial(n, cK/n) restricted to
//! the majority range `{⌊n/2⌋+1, …, n}`. `q2` then draws `s†` with exactly `K†`
//! ones, each observation keeping its previous state with weight `τ` and
//! flipping with weight `1-τ`. That is a conditional-Bernoulli law; it is
//! sampled exactly by first drawing how many previously active observations
//! stay active.

use rand::seq::index;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::IndicatorState;
use crate::error::{Error, Result};

/// `k ln p` with the convention `0 ln 0 = 0`.
fn xlogy(k: f64, p: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * p.ln()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Inverse-CDF draw from unnormalized log masses.
fn sample_log_masses<R: Rng + ?Sized>(log_masses: &[f64], log_total: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lm) in log_masses.iter().enumerate() {
        acc += (lm - log_total).exp();
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass; take the last positive entry
    log_masses
        .iter()
        .rposition(|lm| lm.is_finite())
        .unwrap_or(log_masses.len() - 1)
}

/// Precomputed log factorials for one sample size.
#[derive(Debug, Clone)]
pub struct IndicatorProposal {
    n: usize,
    c: f64,
    tau: f64,
    ln_fact: Vec<f64>,
}

impl IndicatorProposal {
    pub fn new(n: usize, c: f64, tau: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("need at least two observations, got {n}")));
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Config(format!("q1 shrink factor must lie in (0, 1], got {c}")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {tau}")));
        }
        let ln_fact = (0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect();
        Ok(Self { n, c, tau, ln_fact })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn ln_choose(&self, m: usize, k: usize) -> f64 {
        if k > m {
            f64::NEG_INFINITY
        } else {
            self.ln_fact[m] - self.ln_fact[k] - self.ln_fact[m - k]
        }
    }

    /// Smallest admissible active count.
    pub fn k_min(&self) -> usize {
        self.n / 2 + 1
    }

    fn q1_log_masses(&self, k_prev: usize) -> Vec<f64> {
        let p = self.c * k_prev as f64 / self.n as f64;
        (self.k_min()..=self.n)
            .map(|k| {
                self.ln_choose(self.n, k) + xlogy(k as f64, p) + xlogy((self.n - k) as f64, 1.0 - p)
            })
            .collect()
    }

    fn check_k(&self, k: usize, what: &str) -> Result<()> {
        if k < self.k_min() || k > self.n {
            return Err(Error::InvalidInput(format!(
                "{what} = {k} outside the admissible range [{}, {}]",
                self.k_min(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn q1_sample<R: Rng + ?Sized>(&self, k_prev: usize, rng: &mut R) -> usize {
        let masses = self.q1_log_masses(k_prev);
        let total = log_sum_exp(&masses);
        self.k_min() + sample_log_masses(&masses, total, rng)
    }

    pub fn q1_logpmf(&self, k_new: usize, k_prev: usize) -> f64 {
        if k_new < self.k_min() || k_new > self.n {
            return f64::NEG_INFINITY;
        }
        let masses = self.q1_log_masses(k_prev);
        masses[k_new - self.k_min()] - log_sum_exp(&masses)
    }

    /// Log masses of `j`, the number of previously active observations that
    /// stay active, over `j_lo..=j_hi`.
    fn q2_j_law(&self, k_new: usize, a: usize) -> (usize, Vec<f64>) {
        let b = self.n - a;
        let j_lo = k_new.saturating_sub(b);
        let j_hi = a.min(k_new);
        let (lt, l1t) = (self.tau.ln(), (1.0 - self.tau).ln());
        let masses = (j_lo..=j_hi)
            .map(|j| {
                let stay = (b + 2 * j - k_new) as f64;
                let switch = (a + k_new - 2 * j) as f64;
                self.ln_choose(a, j) + self.ln_choose(b, k_new - j) + stay * lt + switch * l1t
            })
            .collect();
        (j_lo, masses)
    }

    pub fn q2_sample<R: Rng + ?Sized>(
        &self,
        k_new: usize,
        prev: &IndicatorState,
        rng: &mut R,
    ) -> IndicatorState {
        debug_assert_eq!(prev.len(), self.n);
        let a = prev.k();
        let (j_lo, masses) = self.q2_j_law(k_new, a);
        let j = j_lo + sample_log_masses(&masses, log_sum_exp(&masses), rng);

        let active = prev.active();
        let inactive: Vec<usize> = (0..self.n).filter(|&i| !prev.is_active(i)).collect();
        let mut s = vec![false; self.n];
        for pick in index::sample(rng, active.len(), j) {
            s[active[pick]] = true;
        }
        for pick in index::sample(rng, inactive.len(), k_new - j) {
            s[inactive[pick]] = true;
        }
        IndicatorState::from_bools(s)
    }

    pub fn q2_logpmf(
        &self,
        next: &IndicatorState,
        k_new: usize,
        prev: &IndicatorState,
    ) -> Result<f64> {
        if next.len() != self.n || prev.len() != self.n {
            return Err(Error::InvalidInput("indicator length mismatch".into()));
        }
        if next.k() != k_new {
            return Err(Error::InvalidInput(format!(
                "proposed indicators sum to {}, expected {k_new}",
                next.k()
            )));
        }
        let stay = next
            .bits()
            .iter()
            .zip(prev.bits())
            .filter(|(a, b)| a == b)
            .count();
        let switch = self.n - stay;
        let (_, masses) = self.q2_j_law(k_new, prev.k());
        Ok(stay as f64 * self.tau.ln() + switch as f64 * (1.0 - self.tau).ln()
            - log_sum_exp(&masses))
    }
}

/// Draws `K†` given the previous active count.
pub fn q1_sample<R: Rng + ?Sized>(k_prev: usize, n: usize, c: f64, rng: &mut R) -> Result<usize> {
    let q = IndicatorProposal::new(n, c, 0.5)?;
    q.check_k(k_prev, "previous active count")?;
    Ok(q.q1_sample(k_prev, rng))
}

/// Normalized log mass of `K†` given the previous active count.
pub fn q1_logpmf(k_new: usize, k_prev: usize, n: usize, c: f64) -> Result<f64> {
    let q = IndicatorProposal::new(n, c, 0.5)?;
    q.check_k(k_prev, "previous active count")?;
    Ok(q.q1_logpmf(k_new, k_prev))
}

pub fn q2_sample<R: Rng + ?Sized>(
    k_new: usize,
    prev: &IndicatorState,
    tau: f64,
    rng: &mut R,
) -> Result<IndicatorState> {
    let q = IndicatorProposal::new(prev.len(), 1.0, tau)?;
    if k_new > prev.len() {
        return Err(Error::InvalidInput(format!(
            "K† = {k_new} exceeds n = {}",
            prev.len()
        )));
    }
    Ok(q.q2_sample(k_new, prev, rng))
}

pub fn q2_logpmf(
    next: &IndicatorState,
    k_new: usize,
    prev: &IndicatorState,
    tau: f64,
) -> Result<f64> {
    IndicatorProposal::new(prev.len(), 1.0, tau)?.q2_logpmf(next, k_new, prev)
}
