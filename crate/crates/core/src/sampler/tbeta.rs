//! Beta distribution truncated to `(lower, 1]`, sampled by inverse CDF.

use rand::Rng;
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedBeta {
    a: f64,
    b: f64,
    lower: f64,
    /// `P(V > lower)` under the untruncated Beta.
    upper_mass: f64,
    log_norm: f64,
}

impl TruncatedBeta {
    pub fn new(a: f64, b: f64, lower: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!(
                "Beta parameters must be positive, got ({a}, {b})"
            )));
        }
        if !(0.0..1.0).contains(&lower) {
            return Err(Error::Config(format!("truncation point {lower} outside [0, 1)")));
        }
        let upper_mass = beta_reg(b, a, 1.0 - lower);
        if !(upper_mass > 0.0) {
            return Err(Error::Degenerate(format!(
                "Beta({a}, {b}) has no mass above {lower}"
            )));
        }
        Ok(Self {
            a,
            b,
            lower,
            upper_mass,
            log_norm: ln_beta(a, b) + upper_mass.ln(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.a
    }

    pub fn beta(&self) -> f64 {
        self.b
    }

    /// Normalized log density; negative infinity outside `(lower, 1]`.
    pub fn ln_pdf(&self, v: f64) -> f64 {
        if !(v > self.lower && v <= 1.0) {
            return f64::NEG_INFINITY;
        }
        let left = if self.a == 1.0 { 0.0 } else { (self.a - 1.0) * v.ln() };
        let right = if self.b == 1.0 {
            0.0
        } else {
            (self.b - 1.0) * (1.0 - v).ln()
        };
        left + right - self.log_norm
    }

    /// `P(V > x)` under the untruncated Beta, accurate in the upper tail.
    fn untruncated_survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else if x >= 1.0 {
            0.0
        } else {
            beta_reg(self.b, self.a, 1.0 - x)
        }
    }

    fn untruncated_pdf(&self, x: f64) -> f64 {
        ((self.a - 1.0) * x.ln() + (self.b - 1.0) * (1.0 - x).ln() - ln_beta(self.a, self.b)).exp()
    }

    pub fn mean(&self) -> f64 {
        let shifted = beta_reg(self.b, self.a + 1.0, 1.0 - self.lower);
        self.a / (self.a + self.b) * shifted / self.upper_mass
    }

    /// Quantile of the truncated law for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        // survival target: P(V > x) = (1 - u) * P(V > lower)
        let target = (1.0 - u) * self.upper_mass;
        let x = self
            .newton(target)
            .unwrap_or_else(|| self.bisect(target));
        self.clamp(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    fn clamp(&self, x: f64) -> f64 {
        let lo = self.lower + f64::EPSILON * self.lower.max(1e-300);
        let hi = 1.0 - f64::EPSILON / 2.0;
        x.clamp(lo, hi)
    }

    /// Safeguarded Newton on the survival function. `None` when it fails to
    /// settle.
    fn newton(&self, target: f64) -> Option<f64> {
        let (mut lo, mut hi) = (self.lower, 1.0);
        let mut x = (self.a / (self.a + self.b)).clamp(self.lower, 1.0);
        if x <= lo || x >= hi {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..100 {
            let sx = self.untruncated_survival(x);
            let err = sx - target;
            if err > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let pdf = self.untruncated_pdf(x);
            let mut next = if pdf > 0.0 && pdf.is_finite() { x + err / pdf } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON {
                return Some(x);
            }
        }
        None
    }

    fn bisect(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (self.lower, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.untruncated_survival(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
