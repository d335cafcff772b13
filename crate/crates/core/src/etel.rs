//! Exponential tilting.
//!
//! Given moment rows `g_1, …, g_m` the tilting vector minimizes
//! `Q(λ) = Σ_i exp(λ'g_i)`. At the minimizer the implied probabilities
//! `w_i ∝ exp(λ'g_i)` satisfy `Σ_i w_i g_i = 0`, and the log exponentially
//! tilted empirical likelihood ratio is `Σ_i ln(m w_i)`.
//!
//! The infimum of `Q` is attained only when the origin lies in the interior of
//! the convex hull of the rows. Outside that region the solver reports
//! `hull_ok = false` instead of returning an error.

use crate::error::{Error, Result};
use crate::sampler::IndicatorState;

/// Row-major `m × d_g` matrix of moment evaluations, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "moment matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "moment matrix has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite moment value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    /// Copies the listed rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("no rows selected".into()));
        }
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidInput(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Bound on `‖Σ w_i g_i‖_∞`, scaled by `max(1, max |g_ij|)`.
    pub gradient_tolerance: f64,
    /// `‖λ‖_2` beyond which the problem is declared unbounded.
    pub divergence_bound: f64,
    pub armijo: f64,
    pub min_step: f64,
    /// Diagonal ridge, as a fraction of `trace(H)/d_g`.
    pub ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            divergence_bound: 1e4,
            armijo: 1e-4,
            min_step: 1e-12,
            ridge: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltingSolution {
    pub lambda: Vec<f64>,
    /// Implied probabilities on the rows passed to the solver. Empty when the
    /// solve failed.
    pub weights: Vec<f64>,
    /// `Σ_i ln(m w_i)`; negative infinity when the solve failed.
    pub log_etel: f64,
    pub converged: bool,
    pub iterations: usize,
    pub hull_ok: bool,
    /// `‖Σ w_i g_i‖_∞` at the returned `lambda`.
    pub gradient_norm: f64,
}

impl TiltingSolution {
    fn failed(lambda: Vec<f64>, iterations: usize, hull_ok: bool, gradient_norm: f64) -> Self {
        Self {
            lambda,
            weights: Vec::new(),
            log_etel: f64::NEG_INFINITY,
            converged: false,
            iterations,
            hull_ok,
            gradient_norm,
        }
    }

    /// True when the solution can be used as a likelihood value.
    pub fn is_usable(&self) -> bool {
        self.converged && self.hull_ok
    }
}

/// Scratch space for one Newton iteration.
struct Workspace {
    z: Vec<f64>,
    gbar: Vec<f64>,
    hess: Vec<f64>,
    step: Vec<f64>,
    trial: Vec<f64>,
}

impl Workspace {
    fn new(m: usize, d: usize) -> Self {
        Self {
            z: vec![0.0; m],
            gbar: vec![0.0; d],
            hess: vec![0.0; d * d],
            step: vec![0.0; d],
            trial: vec![0.0; d],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln Σ_i exp(λ'g_i)`, with the exponents left in `z`.
fn log_q(g: &GMatrix, lambda: &[f64], z: &mut [f64]) -> f64 {
    let mut zmax = f64::NEG_INFINITY;
    for (zi, row) in z.iter_mut().zip(g.iter_rows()) {
        *zi = dot(lambda, row);
        zmax = zmax.max(*zi);
    }
    let s: f64 = z.iter().map(|zi| (zi - zmax).exp()).sum();
    zmax + s.ln()
}

/// Overwrites `z` with normalized weights and fills `gbar = Σ w g` and
/// `hess = Σ w g g'` (upper triangle mirrored). Expects `z` to hold `λ'g_i`.
fn weighted_moments(g: &GMatrix, z: &mut [f64], gbar: &mut [f64], hess: &mut [f64]) {
    let d = g.cols();
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for zi in z.iter_mut() {
        *zi = (*zi - zmax).exp();
        total += *zi;
    }
    gbar.fill(0.0);
    hess.fill(0.0);
    for (zi, row) in z.iter_mut().zip(g.iter_rows()) {
        *zi /= total;
        let w = *zi;
        for a in 0..d {
            let wa = w * row[a];
            gbar[a] += wa;
            for b in a..d {
                hess[a * d + b] += wa * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            hess[a * d + b] = hess[b * d + a];
        }
    }
}

/// In-place Cholesky solve of `A x = b` for a small dense SPD matrix.
/// Returns false if `A` is not numerically positive definite.
fn cholesky_solve(a: &mut [f64], d: usize, b: &mut [f64]) -> bool {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let l = diag.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / l;
        }
    }
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * d + k] * b[k];
        }
        b[i] = v / a[i * d + i];
    }
    for i in (0..d).rev() {
        let mut v = b[i];
        for k in i + 1..d {
            v -= a[k * d + i] * b[k];
        }
        b[i] = v / a[i * d + i];
    }
    true
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest change of any exponent `λ'g_i` tolerated in the polishing step.
const POLISH_DRIFT: f64 = 1e-4;

/// Takes a full Newton step from a converged `λ`, leaving the new weights in
/// `ws.z`. Returns `max_i |g_i' step|`; `λ` and the weights are only updated
/// when that drift is within [`POLISH_DRIFT`].
fn polish(g: &GMatrix, ws: &mut Workspace, lambda: &mut [f64], ridge: f64) -> f64 {
    let d = g.cols();
    let trace: f64 = (0..d).map(|a| ws.hess[a * d + a]).sum();
    // The exact Hessian first: a ridge would damp exactly the weakly curved
    // directions this step exists to finish.
    let mut solved = false;
    for r in [0.0, ridge] {
        let mut hess = ws.hess.clone();
        for a in 0..d {
            hess[a * d + a] += r * trace / d as f64;
        }
        for (s, gb) in ws.step.iter_mut().zip(&ws.gbar) {
            *s = -gb;
        }
        if cholesky_solve(&mut hess, d, &mut ws.step) {
            solved = true;
            break;
        }
    }
    if !solved {
        return 0.0;
    }
    let drift = g
        .iter_rows()
        .map(|row| dot(&ws.step, row).abs())
        .fold(0.0, f64::max);
    if drift <= POLISH_DRIFT {
        for (l, s) in lambda.iter_mut().zip(&ws.step) {
            *l += s;
        }
        log_q(g, lambda, &mut ws.z);
        weighted_moments(g, &mut ws.z, &mut ws.gbar, &mut ws.hess);
    }
    drift
}

/// Minimizes `Σ_i exp(λ'g_i)` by damped Newton with Armijo backtracking,
/// starting from `λ = 0`.
///
/// Unboundedness is detected three ways: a Newton direction `d` with
/// `d'g_i ≤ 0` for every row (a recession direction of `Q`), `‖λ‖` exceeding
/// the divergence bound, or a stalled line search with a non-vanishing
/// gradient. All of these return `hull_ok = false`.
pub fn solve_tilting(g: &GMatrix, opts: &SolverOptions) -> TiltingSolution {
    let m = g.rows();
    let d = g.cols();
    let gscale = inf_norm(g.values()).max(1.0);
    let tol = opts.gradient_tolerance * gscale;
    let mut ws = Workspace::new(m, d);
    let mut lambda = vec![0.0; d];

    let mut log_q_cur = log_q(g, &lambda, &mut ws.z);
    for iter in 0..=opts.max_iterations {
        weighted_moments(g, &mut ws.z, &mut ws.gbar, &mut ws.hess);
        let grad_norm = inf_norm(&ws.gbar);
        if grad_norm <= tol {
            // Two more full Newton steps. At an interior optimum they move the
            // exponents λ'g_i by almost nothing and remove the first-order
            // error ln R inherits from λ (it is not stationary in λ). When
            // zero sits on the boundary of the hull the infimum is only
            // approached as λ → ∞ and each step stays O(1): that is a hull
            // failure, not convergence.
            for _ in 0..2 {
                if polish(g, &mut ws, &mut lambda, opts.ridge) > POLISH_DRIFT {
                    return TiltingSolution::failed(lambda, iter + 1, false, grad_norm);
                }
            }
            let weights = ws.z.clone();
            let log_etel = weights.iter().map(|w| (w * m as f64).ln()).sum();
            return TiltingSolution {
                lambda,
                weights,
                log_etel,
                converged: true,
                iterations: iter,
                hull_ok: true,
                gradient_norm: inf_norm(&ws.gbar),
            };
        }
        if iter == opts.max_iterations {
            return TiltingSolution::failed(lambda, iter, true, grad_norm);
        }

        let trace: f64 = (0..d).map(|a| ws.hess[a * d + a]).sum();
        let ridge = opts.ridge * trace / d as f64;
        for a in 0..d {
            ws.hess[a * d + a] += ridge;
        }
        for (s, gb) in ws.step.iter_mut().zip(&ws.gbar) {
            *s = -gb;
        }
        if !cholesky_solve(&mut ws.hess, d, &mut ws.step) {
            return TiltingSolution::failed(lambda, iter, false, grad_norm);
        }

        let recedes = g.iter_rows().all(|row| dot(&ws.step, row) <= 0.0);
        if recedes {
            return TiltingSolution::failed(lambda, iter, false, grad_norm);
        }

        // slope of ln Q along the step; bounded below by -1
        let slope = dot(&ws.gbar, &ws.step);
        let mut t = 1.0;
        loop {
            for ((tr, l), s) in ws.trial.iter_mut().zip(&lambda).zip(&ws.step) {
                *tr = l + t * s;
            }
            let log_q_trial = log_q(g, &ws.trial, &mut ws.z);
            // Inside the quadratic region the decrease is below rounding.
            let tiny = -slope < 1e-12;
            if tiny || log_q_trial - log_q_cur <= (opts.armijo * t * slope).ln_1p() {
                log_q_cur = log_q_trial;
                break;
            }
            t *= 0.5;
            if t < opts.min_step {
                return TiltingSolution::failed(lambda, iter + 1, false, grad_norm);
            }
        }
        lambda.copy_from_slice(&ws.trial);
        if dot(&lambda, &lambda).sqrt() > opts.divergence_bound {
            return TiltingSolution::failed(lambda, iter + 1, false, grad_norm);
        }
    }
    unreachable!("loop returns on its final iteration")
}

/// `w_i = exp(λ'g_i) / Σ_j exp(λ'g_j)`, evaluated with max-subtraction.
pub fn implied_weights(g: &GMatrix, lambda: &[f64]) -> Result<Vec<f64>> {
    if lambda.len() != g.cols() {
        return Err(Error::InvalidInput(format!(
            "lambda has length {}, expected {}",
            lambda.len(),
            g.cols()
        )));
    }
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidInput("non-finite tilting vector".into()));
    }
    let mut z = vec![0.0; g.rows()];
    let lq = log_q(g, lambda, &mut z);
    Ok(z.into_iter().map(|zi| (zi - lq).exp()).collect())
}

/// `Σ_i ln(m w_i)`: the log empirical likelihood ratio of the weights
/// against uniform weights `1/m`. Never positive.
pub fn log_el_ratio(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "weights must be positive and finite, found {w}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "weights must sum to one, found {total}"
        )));
    }
    let m = weights.len() as f64;
    Ok(weights.iter().map(|w| (w * m).ln()).sum())
}

/// Loss `-Σ_i ln w_i`. Related to the ratio by
/// `log_el_ratio = -loss + m ln m`.
pub fn etel_loss(weights: &[f64]) -> f64 {
    -weights.iter().map(|w| w.ln()).sum::<f64>()
}

/// Solves the tilting problem on the active rows of `g_full` and returns the
/// solution together with `Σ_{i active} ln(K w_i)`.
pub fn log_etel_active(
    g_full: &GMatrix,
    s: &IndicatorState,
    opts: &SolverOptions,
) -> Result<(TiltingSolution, f64)> {
    if s.len() != g_full.rows() {
        return Err(Error::InvalidInput(format!(
            "indicator length {} does not match {} moment rows",
            s.len(),
            g_full.rows()
        )));
    }
    let active = g_full.select_rows(s.active())?;
    let sol = solve_tilting(&active, opts);
    let value = sol.log_etel;
    Ok((sol, value))
}
