//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `RBETEL_ACCEPTANCE=1,2,3`. The process exits non-zero on
//! a failed criterion only when `RBETEL_ACCEPTANCE_STRICT=1`; otherwise the
//! report is informational and `cargo test` stays green.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::beta::{beta_reg, ln_beta};

use rbetel::etel::{solve_tilting, GMatrix, SolverOptions};
use rbetel::moments::{Dataset, Family, KeyCondition, MadScaling, MomentModel};
use rbetel::parallel::Execution;
use rbetel::robust::{mm_fit, ols_fit, MmConfig};
use rbetel::sampler::proposal::IndicatorProposal;
use rbetel::sampler::{log_posterior_kernel, run_chain, ChainConfig, IndicatorState, Method, Priors};
use rbetel::simlab::{self, presets, Experiment, ReplicationOutcome};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// independent numerics

/// Solves `a x = b` (row-major `d × d`) by Gaussian elimination with partial
/// pivoting. `None` when singular.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))?;
        if a[piv * d + col].abs() < 1e-13 * scale {
            return None;
        }
        if piv != col {
            for k in 0..d {
                a.swap(piv * d + k, col * d + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..d {
            let f = a[r * d + col] / a[col * d + col];
            for k in col..d {
                a[r * d + k] -= f * a[col * d + k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|k| a[r * d + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * d + r];
    }
    Some(x)
}

fn lse(rows: &[Vec<f64>], lambda: &[f64]) -> f64 {
    let z: Vec<f64> = rows
        .iter()
        .map(|g| g.iter().zip(lambda).map(|(a, b)| a * b).sum())
        .collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn tilt_weights(rows: &[Vec<f64>], lambda: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = rows
        .iter()
        .map(|g| g.iter().zip(lambda).map(|(a, b)| a * b).sum())
        .collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Plain Newton on `ln Σ exp(λ'g_i)` with backtracking. Returns `(λ, ln R)`
/// or `None` when no finite minimizer exists. After the gradient vanishes a
/// few more full steps must leave every exponent `λ'g_i` in place; along a
/// recession direction they keep drifting instead.
fn oracle_tilt(rows: &[Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let m = rows.len();
    let d = rows.first()?.len();
    let gmax = rows.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut lam = vec![0.0; d];
    let mut settled = 0;
    for _ in 0..500 {
        let w = tilt_weights(rows, &lam);
        let mut grad = vec![0.0; d];
        for (wi, g) in w.iter().zip(rows) {
            for j in 0..d {
                grad[j] += wi * g[j];
            }
        }
        let mut h = vec![0.0; d * d];
        for (wi, g) in w.iter().zip(rows) {
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] += wi * (g[a] - grad[a]) * (g[b] - grad[b]);
                }
            }
        }
        let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
        let step = solve_linear(h.clone(), neg.clone()).or_else(|| {
            // redundant constraints (e.g. an all-zero column): ridge it
            let tr: f64 = (0..d).map(|a| h[a * d + a]).sum::<f64>().max(1e-300);
            let mut hr = h.clone();
            (0..d).for_each(|a| hr[a * d + a] += 1e-12 * tr);
            solve_linear(hr, neg)
        })?;
        if grad.iter().all(|v| v.abs() < 1e-12 * gmax) {
            let drift = rows
                .iter()
                .map(|g| g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>().abs())
                .fold(0.0, f64::max);
            if drift > 1e-6 {
                return None;
            }
            settled += 1;
            if settled == 3 {
                let log_r = w.iter().map(|wi| (m as f64 * wi).ln()).sum();
                return Some((lam, log_r));
            }
            lam.iter_mut().zip(&step).for_each(|(l, s)| *l += s);
            continue;
        }
        let f0 = lse(rows, &lam);
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = lam.iter().zip(&step).map(|(l, s)| l + t * s).collect();
            // below rounding the decrease test is meaningless: take the step
            if -slope < 1e-15 || lse(rows, &trial) <= f0 + 1e-4 * t * slope || t < 1e-14 {
                lam = trial;
                break;
            }
            t *= 0.5;
        }
        if lam.iter().any(|v| !v.is_finite()) || lam.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e6 {
            return None;
        }
    }
    None
}

fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for j in 0..d {
        let mut p = x0.to_vec();
        p[j] += step;
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..iters {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let size = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if size < 1e-11 {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let at = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = at(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = at(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = if fr < vals[d] { at(-0.5) } else { at(0.5) };
            let fc = f(&xc);
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(p, b)| b + 0.5 * (p - b))
                        .collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    simplex[best].clone()
}

/// Normalized Huber score: `e/c` inside the band, `±1` outside.
fn huber(e: f64, c: f64) -> f64 {
    if e >= c {
        1.0
    } else if e <= -c {
        -1.0
    } else {
        e / c
    }
}

/// Moment rows written out directly from their definitions.
fn oracle_rows(
    family: Family,
    keys: &[KeyCondition],
    eps0: f64,
    scale: f64,
    x: &[f64],
    y: Option<&[f64]>,
    theta: &[f64],
    active: &[usize],
) -> Vec<Vec<f64>> {
    active
        .iter()
        .map(|&i| {
            let mut row = Vec::new();
            match family {
                Family::Location => {
                    let e = x[i] - theta[0];
                    row.push(e);
                    if keys.contains(&KeyCondition::ThirdMoment) {
                        row.push(e.powi(3));
                    }
                    if keys.contains(&KeyCondition::Huber) {
                        row.push(e - huber(e, eps0));
                    }
                    if keys.contains(&KeyCondition::MadScale) {
                        row.push(e * e - scale * scale);
                    }
                }
                Family::LinearRegression => {
                    let e = y.unwrap()[i] - theta[0] - theta[1] * x[i];
                    row.push(e);
                    row.push(e * x[i]);
                    if keys.contains(&KeyCondition::ThirdMoment) {
                        row.push(e.powi(3));
                    }
                    if keys.contains(&KeyCondition::Huber) {
                        row.push(e - huber(e, eps0));
                        row.push((e - huber(e, eps0)) * x[i]);
                    }
                    if keys.contains(&KeyCondition::RobustScale) {
                        row.push(e * e - scale);
                    }
                }
            }
            row
        })
        .collect()
}

/// `ln` of the Beta(a, b) density truncated to `(0.5, 1]`.
fn ln_tbeta(v: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * v.ln() + (b - 1.0) * (1.0 - v).ln() - ln_beta(a, b) - beta_reg(b, a, 0.5).ln()
}

fn ln_normal(t: f64, m: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (t - m).powi(2) / var)
}

fn random_subset<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<bool> {
    let mut s = vec![false; n];
    for i in rand::seq::index::sample(rng, n, k) {
        s[i] = true;
    }
    s
}

// ---------------------------------------------------------------------------
// criteria

fn c1_tilting_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut worst_lam, mut worst_sum, mut worst_mom) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..200 {
        let d = rng.random_range(1..=2usize);
        let m = rng.random_range(d + 1..=6usize);
        let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..3.0)).collect();
        let mut rows: Vec<Vec<f64>> = (0..m)
            .map(|_| scales.iter().map(|s| s * normal.sample(&mut rng)).collect())
            .collect();
        // zero becomes a strictly positive combination of the rows
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let ps: f64 = p.iter().sum();
        let center: Vec<f64> = (0..d)
            .map(|j| rows.iter().zip(&p).map(|(r, pi)| r[j] * pi).sum::<f64>() / ps)
            .collect();
        for r in rows.iter_mut() {
            for j in 0..d {
                r[j] -= center[j];
            }
        }
        let g = GMatrix::from_rows(&rows).unwrap();
        let sol = solve_tilting(&g, &SolverOptions::default());
        if !sol.is_usable() {
            failures += 1;
            continue;
        }
        let f = |lam: &[f64]| lse(&rows, lam);
        let mut nm = nelder_mead(&f, &vec![0.0; d], 1.0, 20_000);
        for _ in 0..3 {
            nm = nelder_mead(&f, &nm, 1e-3, 20_000);
        }
        let dl = sol
            .lambda
            .iter()
            .zip(&nm)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        worst_lam = worst_lam.max(dl);
        worst_sum = worst_sum.max((sol.weights.iter().sum::<f64>() - 1.0).abs());
        for j in 0..d {
            let mom: f64 = sol.weights.iter().zip(&rows).map(|(w, r)| w * r[j]).sum();
            worst_mom = worst_mom.max(mom.abs());
        }
    }
    verdict(
        failures == 0 && worst_lam < 1e-5 && worst_sum < 1e-8 && worst_mom < 1e-8,
        format!(
            "200 instances, unusable={failures}, max|Δλ|={worst_lam:.2e} (<1e-5), \
             max|Σw-1|={worst_sum:.2e}, max|Σwg|={worst_mom:.2e} (<1e-8)"
        ),
    )
}

fn c2_proposal_normalization() -> Verdict {
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for n in 2..=8usize {
        let k_min = n / 2 + 1;
        let states: Vec<Vec<bool>> = (0u32..1 << n)
            .map(|mask| (0..n).map(|i| mask >> i & 1 == 1).collect())
            .collect();
        for &tau in &[0.5, 0.7, 0.9] {
            for &c in &[0.99, 0.6] {
                let q = IndicatorProposal::new(n, c, tau).unwrap();
                for k_prev in k_min..=n {
                    let s: f64 = (k_min..=n).map(|k| q.q1_logpmf(k, k_prev).exp()).sum();
                    worst = worst.max((s - 1.0).abs());
                    cases += 1;
                }
                for prev in states.iter().filter(|s| s.iter().filter(|b| **b).count() >= k_min) {
                    let prev = IndicatorState::from_bools(prev.clone());
                    for k_new in k_min..=n {
                        let s: f64 = states
                            .iter()
                            .filter(|s| s.iter().filter(|b| **b).count() == k_new)
                            .map(|s| {
                                let next = IndicatorState::from_bools(s.clone());
                                q.q2_logpmf(&next, k_new, &prev).unwrap().exp()
                            })
                            .sum();
                        worst = worst.max((s - 1.0).abs());
                        cases += 1;
                    }
                }
            }
        }
    }

    // sampling frequencies against the pmf
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let draws = 100_000usize;
    let mut worst_z = 0.0f64;
    let mut cells = 0usize;
    let prev = IndicatorState::from_bools(vec![true, true, true, true, false, false]);
    for &tau in &[0.5, 0.7, 0.9] {
        let q = IndicatorProposal::new(6, 0.99, tau).unwrap();
        for k_new in [4usize, 5] {
            let mut counts: HashMap<Vec<bool>, usize> = HashMap::new();
            for _ in 0..draws {
                let s = q.q2_sample(k_new, &prev, &mut rng);
                *counts.entry(s.bits().to_vec()).or_default() += 1;
            }
            for mask in 0u32..64 {
                let bits: Vec<bool> = (0..6).map(|i| mask >> i & 1 == 1).collect();
                if bits.iter().filter(|b| **b).count() != k_new {
                    continue;
                }
                let next = IndicatorState::from_bools(bits.clone());
                let p = q.q2_logpmf(&next, k_new, &prev).unwrap().exp();
                let observed = *counts.get(&bits).unwrap_or(&0) as f64;
                let sd = (draws as f64 * p * (1.0 - p)).sqrt();
                worst_z = worst_z.max((observed - draws as f64 * p).abs() / sd);
                cells += 1;
            }
        }
    }
    verdict(
        worst < 1e-10 && worst_z < 3.0,
        format!(
            "{cases} enumerated laws, max|Σq-1|={worst:.2e} (<1e-10); \
             {cells} sampled cells at 1e5 draws, max|z|={worst_z:.2} (<3)"
        ),
    )
}

fn c3_kernel_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut admissible, mut tried, mut inf_mismatch) = (0usize, 0usize, 0usize);
    let mut worst = 0.0f64;
    let mut by_family = [0usize; 2];
    while admissible < 1000 {
        tried += 1;
        let regression = rng.random_bool(0.5);
        let n = rng.random_range(8..=30usize);
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let z = normal.sample(&mut rng);
                if regression {
                    5f64.sqrt() * z
                } else {
                    1.0 + z * if rng.random_bool(0.1) { 3.0 } else { 1.0 }
                }
            })
            .collect();
        let pool: Vec<KeyCondition> = if regression {
            vec![KeyCondition::ThirdMoment, KeyCondition::Huber, KeyCondition::RobustScale]
        } else {
            vec![KeyCondition::ThirdMoment, KeyCondition::Huber, KeyCondition::MadScale]
        };
        let mut keys: Vec<KeyCondition> = pool.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        if keys.is_empty() {
            keys.push(pool[rng.random_range(0..3)]);
        }
        let eps0 = rng.random_range(0.5..2.0);
        let (data, model, theta) = if regression {
            let y: Vec<f64> = x
                .iter()
                .map(|xi| 2.0 + xi + normal.sample(&mut rng) * if rng.random_bool(0.1) { 3.0 } else { 1.0 })
                .collect();
            let data = Dataset::regression(x.clone(), y).unwrap();
            let model = MomentModel::regression_for(&data, &keys, eps0, &MmConfig::default()).unwrap();
            let theta = vec![2.0 + 0.2 * normal.sample(&mut rng), 1.0 + 0.1 * normal.sample(&mut rng)];
            (data, model, theta)
        } else {
            let data = Dataset::location(x.clone()).unwrap();
            let model = MomentModel::location_for(&data, &keys, eps0, MadScaling::NormalConsistent).unwrap();
            (data, model, vec![1.0 + 0.3 * normal.sample(&mut rng)])
        };
        let priors = Priors {
            theta_mean: theta.iter().map(|_| rng.random_range(-2.0..2.0)).collect(),
            theta_var: theta.iter().map(|_| rng.random_range(0.5..200.0)).collect(),
            alpha0: rng.random_range(2.0..60.0),
            beta0: rng.random_range(1.0..20.0),
        };
        let k = rng.random_range(n / 2 + 1..=n);
        let bits = random_subset(n, k, &mut rng);
        let active: Vec<usize> = (0..n).filter(|&i| bits[i]).collect();
        let v = rng.random_range(0.5..1.0f64).max(0.5 + 1e-9);

        let scale = match model.family() {
            Family::Location => model.stats().mad.unwrap_or(0.0),
            Family::LinearRegression => model.stats().robust_scale_t.unwrap_or(0.0),
        };
        let rows = oracle_rows(model.family(), &keys, eps0, scale, &data.x, data.y.as_deref(), &theta, &active);
        let got = log_posterior_kernel(&theta, &IndicatorState::from_bools(bits), v, &model, &priors, &data).unwrap();
        let Some((_, log_r)) = oracle_tilt(&rows) else {
            if got.is_finite() {
                inf_mismatch += 1;
            }
            continue;
        };
        let expected = theta
            .iter()
            .zip(&priors.theta_mean)
            .zip(&priors.theta_var)
            .map(|((t, m), var)| ln_normal(*t, *m, *var))
            .sum::<f64>()
            + ln_tbeta(v, priors.alpha0, priors.beta0)
            + k as f64 * v.ln()
            + (n - k) as f64 * (1.0 - v).ln()
            + log_r;
        worst = worst.max((got - expected).abs());
        admissible += 1;
        by_family[regression as usize] += 1;
    }
    verdict(
        worst < 1e-10 && inf_mismatch == 0,
        format!(
            "{admissible} admissible states ({} location, {} regression; {tried} drawn), \
             max|Δ|={worst:.2e} (<1e-10), finite-vs-infinite disagreements={inf_mismatch}",
            by_family[0], by_family[1]
        ),
    )
}

/// A concentrated toy: with the mass spread over a dozen indicator sets the
/// Monte Carlo error of the TV distance alone is about 0.02 at 2e5 sweeps.
fn c4_enumeration() -> Verdict {
    let x = vec![-0.9, -0.3, 0.1, 0.5, 1.1];
    let n = x.len();
    let keys = [KeyCondition::MadScale];
    let data = Dataset::location(x.clone()).unwrap();
    let model = MomentModel::location_for(&data, &keys, 1.5, MadScaling::NormalConsistent).unwrap();
    let mad = model.stats().mad.unwrap();
    let priors = Priors {
        theta_mean: vec![0.0],
        theta_var: vec![0.1],
        alpha0: 40.0,
        beta0: 1.0,
    };
    let (lo, hi) = (x[0], x[n - 1]);
    let n_cells = 41usize;
    let width = (hi - lo) / n_cells as f64;
    let k_min = n / 2 + 1;
    let subsets: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() as usize >= k_min).collect();
    // ∫ π(v) v^K (1-v)^{n-K} dv over (0.5, 1], in closed form
    let (a, b) = (priors.alpha0, priors.beta0);
    let ln_vint = |k: usize| {
        let (a2, b2) = (a + k as f64, b + (n - k) as f64);
        ln_beta(a2, b2) + beta_reg(b2, a2, 0.5).ln() - ln_beta(a, b) - beta_reg(b, a, 0.5).ln()
    };

    let mut mass = vec![0.0; n_cells * subsets.len()];
    let sub = 40usize;
    for (si, &mask) in subsets.iter().enumerate() {
        let active: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let vint = ln_vint(active.len());
        let dens = |t: f64| -> f64 {
            let rows = oracle_rows(Family::Location, &keys, 1.5, mad, &x, None, &[t], &active);
            match oracle_tilt(&rows) {
                Some((_, lr)) => (ln_normal(t, 0.0, 0.1) + vint + lr).exp(),
                None => 0.0,
            }
        };
        for c in 0..n_cells {
            let a0 = lo + c as f64 * width;
            let h = width / sub as f64;
            let mut s = dens(a0) + dens(a0 + width);
            for j in 1..sub {
                s += dens(a0 + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            mass[c * subsets.len() + si] = s * h / 3.0;
        }
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);

    let cfg = ChainConfig {
        method: Method::Rbetel,
        n_burnin: 10_000,
        n_keep: 200_000,
        seed: 404,
        keep_indicator_draws: true,
        ..ChainConfig::default()
    };
    let out = run_chain(&model, &priors, &data, &cfg).unwrap();
    let s_draws = out.indicator_draws.as_ref().unwrap();
    let index: HashMap<u32, usize> = subsets.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let mut freq = vec![0.0; mass.len()];
    let mut outside = 0usize;
    for t in 0..out.n_draws() {
        let theta = out.theta_draws[t];
        let mask = s_draws
            .row(t)
            .iter()
            .enumerate()
            .fold(0u32, |m, (i, b)| m | (u32::from(*b != 0) << i));
        let cell = ((theta - lo) / width).floor();
        if !(0.0..n_cells as f64).contains(&cell) {
            outside += 1;
            continue;
        }
        match index.get(&mask) {
            Some(&si) => freq[cell as usize * subsets.len() + si] += 1.0,
            None => outside += 1,
        }
    }
    let nd = out.n_draws() as f64;
    let tv = 0.5
        * (freq.iter().zip(&mass).map(|(f, p)| (f / nd - p).abs()).sum::<f64>() + outside as f64 / nd);
    verdict(
        tv < 0.02,
        format!(
            "n=5, {n_cells} θ cells × {} indicator sets, 2e5 sweeps: TV={tv:.4} (<0.02)",
            subsets.len()
        ),
    )
}

fn report_line(out: &ReplicationOutcome, method: Method, param: usize) -> (f64, f64) {
    let r = out.reports.iter().find(|r| r.method == method).expect("method report");
    let p = &r.parameters[param];
    (p.av_post_mean, p.poc)
}

fn run_experiment(exp: &Experiment) -> ReplicationOutcome {
    simlab::replicate(exp, Execution::Sequential).expect("replication runs")
}

fn c5_location_grid() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for xi in presets::LOCATION_SIZES {
        let out = run_experiment(&presets::location_grid(xi));
        let (bm, bpoc) = report_line(&out, Method::Betel, 0);
        let (rm, rpoc) = report_line(&out, Method::Rbetel, 0);
        let mix = 1.0 + 0.05 * (xi - 1.0);
        pass &= (bm - mix).abs() <= 0.03;
        pass &= (rm - 1.0).abs() <= 0.05;
        pass &= rpoc >= 0.9;
        if xi >= 4.0 {
            pass &= bpoc <= 0.1;
        }
        parts.push(format!(
            "ξ0={xi}: BETEL {bm:.4} (mix {mix:.4}) poc {bpoc:.2}, RBETEL {rm:.4} poc {rpoc:.2}"
        ));
    }
    verdict(pass, parts.join("; "))
}

fn c6_regression_grid() -> Verdict {
    let mut pass = true;
    let clean = run_experiment(&presets::regression_grid(1.0));
    let mut parts = Vec::new();
    for m in [Method::Betel, Method::Rbetel] {
        for j in 0..2 {
            let (mean, poc) = report_line(&clean, m, j);
            pass &= poc == 1.0;
            parts.push(format!("v*=1 {} δ{j} {mean:.4} poc {poc:.2}", m.label()));
        }
    }
    let dirty = run_experiment(&presets::regression_grid(0.95));
    let (rm, rpoc) = report_line(&dirty, Method::Rbetel, 1);
    let (bm, bpoc) = report_line(&dirty, Method::Betel, 1);
    pass &= (rm - 1.0).abs() <= 0.01 && rpoc >= 0.9;
    pass &= bm < 0.985 && bpoc <= 0.5;
    parts.push(format!(
        "v*=0.95 slope: RBETEL {rm:.4} poc {rpoc:.2}, BETEL {bm:.4} poc {bpoc:.2}"
    ));
    verdict(pass, parts.join("; "))
}

struct Fixture {
    body: Vec<f64>,
    brain: Vec<f64>,
}

fn fixture() -> Fixture {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/animals65.csv");
    let mut rdr = csv::Reader::from_path(path).expect("fixture present");
    let (mut body, mut brain) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        body.push(rec[1].parse::<f64>().unwrap());
        brain.push(rec[2].parse::<f64>().unwrap());
    }
    Fixture { body, brain }
}

fn c7_empirical() -> Verdict {
    let f = fixture();
    let x: Vec<f64> = f.body.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = f.brain.iter().map(|v| v.ln()).collect();
    let data = Dataset::regression(x, y).unwrap();
    let spec = presets::empirical_analysis();
    let seed = |m: Method| simlab::derive_seed(1, 0, simlab::method_stream(m));
    let betel = spec.fit(&data, Method::Betel, seed(Method::Betel)).unwrap();
    let robust = spec.fit(&data, Method::Rbetel, seed(Method::Rbetel)).unwrap();
    let (d0, d1) = (robust.parameters[0].post_mean, robust.parameters[1].post_mean);
    let b1 = betel.parameters[1].post_mean;

    let mut order: Vec<usize> = (0..f.body.len()).collect();
    order.sort_by(|&a, &b| f.body[b].total_cmp(&f.body[a]));
    let largest = &order[..3];
    let big: Vec<f64> = largest.iter().map(|&i| robust.inclusion[i]).collect();
    let rest_min = (0..f.body.len())
        .filter(|i| !largest.contains(i))
        .map(|i| robust.inclusion[i])
        .fold(f64::INFINITY, f64::min);

    let checks = [
        (d0 - 2.15).abs() <= 0.08,
        (d1 - 0.751).abs() <= 0.03,
        (b1 - 0.605).abs() <= 0.04,
        big.iter().all(|p| *p < 0.1),
        rest_min > 0.7,
    ];
    verdict(
        checks.iter().all(|c| *c),
        format!(
            "RBETEL δ0 {d0:.4} [{}] δ1 {d1:.4} [{}]; BETEL δ1 {b1:.4} [{}]; \
             largest-body inclusion {:.3?} (<0.1) [{}]; min other {rest_min:.3} (>0.7) [{}]",
            ok(checks[0]),
            ok(checks[1]),
            ok(checks[2]),
            big,
            ok(checks[3]),
            ok(checks[4])
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "miss"
    }
}

fn c8_baselines() -> Verdict {
    let f = fixture();
    let x: Vec<f64> = f.body.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = f.brain.iter().map(|v| v.ln()).collect();
    let ols = ols_fit(&x, &y).unwrap().coefficients;
    let mm = mm_fit(&x, &y, &MmConfig::default()).unwrap().coefficients;
    let pass = (ols[0] - 2.1717).abs() <= 0.001
        && (ols[1] - 0.5915).abs() <= 0.001
        && (mm[0] - 2.1175).abs() <= 0.03
        && (mm[1] - 0.7460).abs() <= 0.03;
    verdict(
        pass,
        format!(
            "OLS ({:.5}, {:.5}) vs (2.1717, 0.5915) ±0.001; MM ({:.4}, {:.4}) vs (2.1175, 0.7460) ±0.03",
            ols[0], ols[1], mm[0], mm[1]
        ),
    )
}

fn c9_key_sweep() -> Verdict {
    let design = presets::sim41_design();
    let mut rng = ChaCha8Rng::seed_from_u64(simlab::derive_seed(1, 0, simlab::DATA_STREAM));
    let sample = simlab::gen_location_data(&design, &mut rng).unwrap();
    let data = Dataset::location(sample.x.clone()).unwrap();
    let outliers: Vec<usize> = (0..data.len()).filter(|&i| sample.outlier[i]).collect();
    let all = [KeyCondition::ThirdMoment, KeyCondition::Huber, KeyCondition::MadScale];
    let mut pass = !outliers.is_empty();
    let mut parts = Vec::new();
    let mut avg: Vec<(u32, f64)> = Vec::new();
    for mask in 1u32..8 {
        let keys: Vec<KeyCondition> = (0..3).filter(|j| mask >> j & 1 == 1).map(|j| all[j]).collect();
        let spec = presets::sim41_analysis(keys);
        let seed = simlab::derive_seed(1, 0, simlab::method_stream(Method::Rbetel));
        let r = spec.fit(&data, Method::Rbetel, seed).unwrap();
        let mu = r.parameters[0].post_mean;
        let incl: Vec<f64> = outliers.iter().map(|&i| r.inclusion[i]).collect();
        let max = incl.iter().cloned().fold(0.0, f64::max);
        let mean = incl.iter().sum::<f64>() / incl.len().max(1) as f64;
        pass &= mu > 0.8 && mu < 1.2 && max < 0.25;
        let label: Vec<String> = (0..3).filter(|j| mask >> j & 1 == 1).map(|j| format!("C{}", j + 1)).collect();
        parts.push(format!("{} μ {mu:.3} outlier incl mean {mean:.3} max {max:.3}", label.join("+")));
        avg.push((mask, mean));
    }
    let c3_only = avg.iter().find(|(m, _)| *m == 0b100).unwrap().1;
    let with_c1: Vec<f64> = avg.iter().filter(|(m, _)| m & 1 == 1).map(|(_, v)| *v).collect();
    let c1_avg = with_c1.iter().sum::<f64>() / with_c1.len() as f64;
    pass &= c1_avg <= c3_only;
    parts.push(format!(
        "{} outliers; C1 subsets avg {c1_avg:.3} vs C3 only {c3_only:.3}",
        outliers.len()
    ));
    verdict(pass, parts.join("; "))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rbetel-accept-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn rbetel(args: &[&str]) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_rbetel"))
        .args(args)
        .output()
        .expect("binary runs");
    if !out.status.success() {
        eprintln!("rbetel {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn c10_determinism() -> Verdict {
    let base = scratch("det");
    let small = ["--burnin", "300", "--keep", "600"];
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("fit", vec!["fit"]),
        ("simulate", vec!["simulate", "--key-sets", "c1;c1,c3"]),
        ("replicate", vec!["replicate", "--reps", "3", "--n", "120", "--grid", "2,6"]),
        ("replicate_reg", vec!["replicate", "--experiment", "regression", "--reps", "3", "--n", "120", "--grid", "1,0.95"]),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, args) in &runs {
        let a = base.join(format!("{name}-a"));
        let mut first: Vec<&str> = args.clone();
        first.extend(small);
        first.extend(["--seed", "11", "--out", a.to_str().unwrap()]);
        let manifest = a.join("manifest.json");
        let mut ok = rbetel(&first);
        let mut same = ok;
        for (tag, workers) in [("b", "1"), ("c", "8")] {
            let dir = base.join(format!("{name}-{tag}"));
            let cmd = args[0];
            ok &= rbetel(&[
                cmd,
                "--config",
                manifest.to_str().unwrap(),
                "--workers",
                workers,
                "--out",
                dir.to_str().unwrap(),
            ]);
            same &= ok && read_tree(&a) == read_tree(&dir);
        }
        pass &= same;
        parts.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    // summarize re-reads a draws file written above
    let draws = base.join("fit-a/rbetel/draws.csv");
    let sa = base.join("sum-a");
    let mut same = rbetel(&["summarize", "--draws", draws.to_str().unwrap(), "--out", sa.to_str().unwrap()]);
    let sm = sa.join("manifest.json");
    for (tag, workers) in [("b", "1"), ("c", "8")] {
        let dir = base.join(format!("sum-{tag}"));
        same &= rbetel(&["summarize", "--config", sm.to_str().unwrap(), "--workers", workers, "--out", dir.to_str().unwrap()])
            && read_tree(&sa) == read_tree(&dir);
    }
    pass &= same;
    parts.push(format!("summarize {}", if same { "identical" } else { "DIFFERS" }));
    let _ = std::fs::remove_dir_all(&base);
    verdict(pass, format!("manifest reruns at --workers 1 and 8: {}", parts.join(", ")))
}

fn main() {
    let criteria: Vec<(usize, &str, Duration, fn() -> Verdict)> = vec![
        (1, "tilting solver vs Nelder-Mead oracle", Duration::from_secs(10), c1_tilting_oracle),
        (2, "proposal normalization and sampling", Duration::from_secs(30), c2_proposal_normalization),
        (3, "posterior kernel identity", Duration::MAX, c3_kernel_identity),
        (4, "exact enumeration MCMC check", Duration::from_secs(120), c4_enumeration),
        (5, "location contamination grid", Duration::from_secs(30 * 60), c5_location_grid),
        (6, "regression leverage grid", Duration::from_secs(45 * 60), c6_regression_grid),
        (7, "brain/body empirical fit", Duration::from_secs(10 * 60), c7_empirical),
        (8, "OLS / MM baselines", Duration::MAX, c8_baselines),
        (9, "key-condition sweep", Duration::from_secs(15 * 60), c9_key_sweep),
        (10, "CLI determinism", Duration::MAX, c10_determinism),
    ];
    let selected: Option<Vec<usize>> = std::env::var("RBETEL_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = v.pass && in_time;
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" / limit {} s", limit.as_secs())
        };
        println!(
            "criterion {id:>2} {}: {name}: {} ({:.1} s{budget})",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        if std::env::var("RBETEL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
