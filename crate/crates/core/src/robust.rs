//! Least squares and MM-type robust regression for a single regressor.
//!
//! The MM fit starts from a high-breakdown S-estimate found over random
//! two-point elemental subsets (Tukey bisquare, `c0 = 1.5476`, `b = 0.5`) and
//! finishes with a bisquare M-step (`c1 = 4.685`) at the fixed S-scale.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Ols,
    Mm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// `(δ0, δ1)`.
    pub coefficients: [f64; 2],
    pub std_errors: [f64; 2],
    /// Residual scale (not squared).
    pub scale: f64,
    pub method: FitMethod,
    pub iterations: usize,
}

/// Which quantity is exported as the robust error scale `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleExport {
    #[default]
    SScaleSquared,
    SScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmConfig {
    pub n_subsets: usize,
    /// IRLS steps applied to each elemental start.
    pub refine_steps: usize,
    /// Starts carried to full convergence after the first pass.
    pub n_best: usize,
    pub c0: f64,
    pub breakdown: f64,
    pub c1: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub scale_tolerance: f64,
    pub seed: u64,
    pub export: ScaleExport,
    pub execution: Execution,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self {
            n_subsets: 500,
            refine_steps: 3,
            n_best: 5,
            c0: 1.5476,
            breakdown: 0.5,
            c1: 4.685,
            max_iterations: 500,
            tolerance: 1e-8,
            scale_tolerance: 1e-10,
            seed: 0x5eed_0001,
            export: ScaleExport::SScaleSquared,
            execution: Execution::Sequential,
        }
    }
}

fn check_xy(x: &[f64], y: &[f64], min_n: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "x has {} values but y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_n {
        return Err(Error::InvalidInput(format!(
            "need at least {min_n} observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in regression data".into()));
    }
    Ok(())
}

/// Weighted least squares for `y = δ0 + δ1 x`. `None` when the weighted
/// design is singular.
fn wls(x: &[f64], y: &[f64], w: &[f64]) -> Option<[f64; 2]> {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for ((xi, yi), wi) in x.iter().zip(y).zip(w) {
        sw += wi;
        sx += wi * xi;
        sy += wi * yi;
    }
    if !(sw > 0.0) {
        return None;
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((xi, yi), wi) in x.iter().zip(y).zip(w) {
        let dx = xi - mx;
        sxx += wi * dx * dx;
        sxy += wi * dx * (yi - my);
    }
    if !(sxx > 1e-300 * sw.max(1.0)) {
        return None;
    }
    let slope = sxy / sxx;
    Some([my - slope * mx, slope])
}

fn residuals(x: &[f64], y: &[f64], beta: &[f64; 2], out: &mut [f64]) {
    for ((r, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *r = yi - beta[0] - beta[1] * xi;
    }
}

/// Ordinary least squares with conventional standard errors.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    check_xy(x, y, 3)?;
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("regressor is constant".into()));
    }
    let beta = wls(x, y, &vec![1.0; n])
        .ok_or_else(|| Error::Degenerate("rank-deficient design".into()))?;
    let mut r = vec![0.0; n];
    residuals(x, y, &beta, &mut r);
    let rss: f64 = r.iter().map(|v| v * v).sum();
    let sigma2 = rss / (n as f64 - 2.0);
    let sumx2: f64 = x.iter().map(|v| v * v).sum();
    let se1 = (sigma2 / sxx).sqrt();
    let se0 = (sigma2 * sumx2 / (n as f64 * sxx)).sqrt();
    Ok(RegressionFit {
        coefficients: beta,
        std_errors: [se0, se1],
        scale: sigma2.sqrt(),
        method: FitMethod::Ols,
        iterations: 1,
    })
}

/// Bisquare ρ normalized to a maximum of one.
pub fn bisquare_rho(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        1.0
    } else {
        let a = 1.0 - t * t;
        1.0 - a * a * a
    }
}

/// IRLS weight `ψ(u)/u` of the bisquare, up to a constant.
pub fn bisquare_weight(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        0.0
    } else {
        let a = 1.0 - t * t;
        a * a
    }
}

/// M-scale `σ` solving `mean ρ(r_i/σ) = b`, by fixed-point iteration.
/// Returns zero when at least half the residuals vanish.
pub fn s_scale(r: &[f64], c: f64, b: f64, rel_tol: f64, max_iter: usize) -> f64 {
    let mut abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let med = abs[abs.len() / 2];
    let mut sigma = med / 0.6745;
    if !(sigma > 0.0) {
        // more than half the residuals are zero
        let nonzero = abs.iter().filter(|v| **v > 0.0).count() as f64 / abs.len() as f64;
        if nonzero <= b {
            return 0.0;
        }
        sigma = abs.iter().copied().fold(0.0, f64::max);
    }
    let n = r.len() as f64;
    for _ in 0..max_iter {
        let mean_rho = r.iter().map(|v| bisquare_rho(v / sigma, c)).sum::<f64>() / n;
        let next = sigma * (mean_rho / b).sqrt();
        if !(next > 0.0) {
            return 0.0;
        }
        let done = ((next - sigma) / sigma).abs() < rel_tol;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

struct SCandidate {
    beta: [f64; 2],
    scale: f64,
}

/// Runs `steps` S-type IRLS iterations from `beta` (or until the coefficients
/// settle when `steps` is large).
fn s_refine(x: &[f64], y: &[f64], beta: [f64; 2], steps: usize, cfg: &MmConfig) -> SCandidate {
    let n = x.len();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut beta = beta;
    residuals(x, y, &beta, &mut r);
    let mut scale = s_scale(&r, cfg.c0, cfg.breakdown, cfg.scale_tolerance, 200);
    for _ in 0..steps {
        if scale == 0.0 {
            break;
        }
        for (wi, ri) in w.iter_mut().zip(&r) {
            *wi = bisquare_weight(ri / scale, cfg.c0);
        }
        let Some(next) = wls(x, y, &w) else { break };
        let change = (next[0] - beta[0]).abs().max((next[1] - beta[1]).abs());
        beta = next;
        residuals(x, y, &beta, &mut r);
        scale = s_scale(&r, cfg.c0, cfg.breakdown, cfg.scale_tolerance, 200);
        if change < cfg.tolerance * (1.0 + beta[0].abs().max(beta[1].abs())) {
            break;
        }
    }
    SCandidate { beta, scale }
}

/// High-breakdown S-estimate over random elemental subsets.
pub fn s_estimate(x: &[f64], y: &[f64], cfg: &MmConfig) -> Result<([f64; 2], f64)> {
    check_xy(x, y, 3)?;
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = Vec::with_capacity(cfg.n_subsets);
    let mut attempts = 0;
    while starts.len() < cfg.n_subsets && attempts < 20 * cfg.n_subsets.max(1) {
        attempts += 1;
        let pair = index::sample(&mut rng, n, 2);
        let (i, j) = (pair.index(0), pair.index(1));
        let dx = x[j] - x[i];
        if dx.abs() <= 1e-12 * (x[i].abs() + x[j].abs()).max(1.0) {
            continue;
        }
        let slope = (y[j] - y[i]) / dx;
        starts.push([y[i] - slope * x[i], slope]);
    }
    if starts.is_empty() {
        return Err(Error::Degenerate(
            "no elemental subset with distinct regressor values".into(),
        ));
    }

    let refined = parallel::map_slice(&starts, cfg.execution, |_, b| {
        s_refine(x, y, *b, cfg.refine_steps, cfg)
    });
    let mut order: Vec<usize> = (0..refined.len()).collect();
    order.sort_by(|&a, &b| refined[a].scale.total_cmp(&refined[b].scale).then(a.cmp(&b)));

    let mut best: Option<SCandidate> = None;
    for &k in order.iter().take(cfg.n_best.max(1)) {
        let cand = s_refine(x, y, refined[k].beta, cfg.max_iterations, cfg);
        if best.as_ref().map_or(true, |b| cand.scale < b.scale) {
            best = Some(cand);
        }
    }
    let best = best.expect("at least one start");
    Ok((best.beta, best.scale))
}

/// MM regression: S-estimate for scale, then a bisquare M-step at that scale.
pub fn mm_fit(x: &[f64], y: &[f64], cfg: &MmConfig) -> Result<RegressionFit> {
    check_xy(x, y, 3)?;
    let (s_beta, scale) = s_estimate(x, y, cfg)?;
    let n = x.len();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut beta = s_beta;
    let mut iterations = 0;
    if scale > 0.0 {
        residuals(x, y, &beta, &mut r);
        for it in 0..cfg.max_iterations {
            iterations = it + 1;
            for (wi, ri) in w.iter_mut().zip(&r) {
                *wi = bisquare_weight(ri / scale, cfg.c1);
            }
            let Some(next) = wls(x, y, &w) else { break };
            let change = (next[0] - beta[0]).abs().max((next[1] - beta[1]).abs());
            beta = next;
            residuals(x, y, &beta, &mut r);
            if change < cfg.tolerance {
                break;
            }
        }
    }
    let std_errors = if scale > 0.0 {
        m_std_errors(x, &r, scale, cfg.c1)
    } else {
        [0.0, 0.0]
    };
    Ok(RegressionFit {
        coefficients: beta,
        std_errors,
        scale,
        method: FitMethod::Mm,
        iterations,
    })
}

/// Asymptotic sandwich standard errors `σ² E[ψ²]/E[ψ']² (X'X)^{-1}`.
fn m_std_errors(x: &[f64], r: &[f64], scale: f64, c: f64) -> [f64; 2] {
    let n = x.len() as f64;
    let (mut psi2, mut dpsi) = (0.0, 0.0);
    for ri in r {
        let u = ri / scale;
        let t = u / c;
        if t.abs() < 1.0 {
            let a = 1.0 - t * t;
            psi2 += (u * a * a).powi(2);
            dpsi += a * (1.0 - 5.0 * t * t);
        }
    }
    psi2 /= n;
    dpsi /= n;
    if !(dpsi > 0.0) {
        return [f64::NAN, f64::NAN];
    }
    let factor = scale * scale * psi2 / (dpsi * dpsi);
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sumx2: f64 = x.iter().map(|v| v * v).sum();
    [
        (factor * sumx2 / (n * sxx)).sqrt(),
        (factor / sxx).sqrt(),
    ]
}

/// Robust error scale `T` consumed by the regression scale key.
pub fn robust_error_scale(x: &[f64], y: &[f64], cfg: &MmConfig) -> Result<f64> {
    let fit = mm_fit(x, y, cfg)?;
    Ok(match cfg.export {
        ScaleExport::SScaleSquared => fit.scale * fit.scale,
        ScaleExport::SScale => fit.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_exact_fits() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 + v).collect();
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
        assert!(fit.scale < 1e-12);

        let fit = ols_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_rejects_constant_regressor() {
        assert!(matches!(
            ols_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(ols_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ols_residuals_orthogonal() {
        let x = [0.3, -1.2, 2.5, 0.9, 4.1, -0.7];
        let y = [1.0, -0.4, 3.3, 2.2, 6.0, 0.1];
        let fit = ols_fit(&x, &y).unwrap();
        let mut r = vec![0.0; x.len()];
        residuals(&x, &y, &fit.coefficients, &mut r);
        let s0: f64 = r.iter().sum();
        let s1: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!(s0.abs() < 1e-10 && s1.abs() < 1e-10);
    }

    #[test]
    fn s_scale_is_normal_consistent_constant() {
        // E_Φ[ρ(Z)] = 0.5 at c = 1.5476: quadrature over a fine grid
        let c = 1.5476;
        let h = 1e-4;
        let mut total = 0.0;
        let mut z: f64 = -10.0;
        while z < 10.0 {
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            total += bisquare_rho(z, c) * phi * h;
            z += h;
        }
        assert!((total - 0.5).abs() < 1e-4, "{total}");
    }

    #[test]
    fn noiseless_data_has_zero_scale() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + v).collect();
        let t = robust_error_scale(&x, &y, &MmConfig::default()).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn single_spike_leaves_scale_untouched() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v).collect();
        y[7] += 1e6;
        let fit = mm_fit(&x, &y, &MmConfig::default()).unwrap();
        assert_eq!(fit.scale, 0.0);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn mm_is_seed_reproducible() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64 - 8.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 + v + ((i * 13) % 7) as f64 * 0.1 - 0.3)
            .collect();
        let a = mm_fit(&x, &y, &MmConfig::default()).unwrap();
        let b = mm_fit(&x, &y, &MmConfig::default()).unwrap();
        assert_eq!(a, b);
        let par = MmConfig {
            execution: Execution::Parallel,
            ..MmConfig::default()
        };
        assert_eq!(a, mm_fit(&x, &y, &par).unwrap());
    }

    #[test]
    fn degenerate_subsets_error() {
        let x = [2.0; 12];
        let y: Vec<f64> = (0..12).map(|i| i as f64).collect();
        assert!(matches!(
            mm_fit(&x, &y, &MmConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }
}
