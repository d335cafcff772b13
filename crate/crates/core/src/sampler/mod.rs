//! MCMC over `(θ, s, v)` for the robust posterior, and over `θ` alone for the
//! plain exponentially tilted posterior.
//!
//! One sweep updates, in order:
//!
//! 1. `θ` by random-walk Metropolis–Hastings on the active subset,
//! 2. `(s, K)` jointly with the two-part proposal of [`proposal`],
//! 3. `v` by a Gibbs draw from its truncated Beta full conditional.
//!
//! The unnormalized log posterior is
//!
//! ```text
//! ln π(θ) + ln π(v) + K ln v + (n-K) ln(1-v) + Σ_{s_i=1} ln(K w̃_i(θ, s))
//! ```
//!
//! restricted to `K > n/2`. States where the tilting problem has no solution
//! get a log kernel of negative infinity and are never accepted.

pub mod proposal;
pub mod tbeta;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etel::{solve_tilting, SolverOptions, TiltingSolution};
use crate::moments::{g_matrix, Dataset, MomentFunction};

pub use proposal::{q1_logpmf, q1_sample, q2_logpmf, q2_sample, IndicatorProposal};
pub use tbeta::TruncatedBeta;

/// Lower truncation point of the prior on `v`.
pub const V_LOWER: f64 = 0.5;

/// Acceptance rate targeted by burn-in adaptation of the `θ` step.
pub const ADAPT_TARGET: f64 = 0.3;

/// Binary inclusion vector with its cached active list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorState {
    bits: Vec<bool>,
    active: Vec<usize>,
}

impl IndicatorState {
    pub fn from_bools(bits: Vec<bool>) -> Self {
        let active = bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        Self { bits, active }
    }

    pub fn all_active(n: usize) -> Self {
        Self::from_bools(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Active count `K`.
    pub fn k(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// `K > n/2`.
    pub fn is_majority(&self) -> bool {
        2 * self.k() > self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub theta_mean: Vec<f64>,
    pub theta_var: Vec<f64>,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Priors {
    /// Independent `N(0, 100)` on each coordinate.
    pub fn flat(p: usize, alpha0: f64, beta0: f64) -> Self {
        Self {
            theta_mean: vec![0.0; p],
            theta_var: vec![100.0; p],
            alpha0,
            beta0,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.theta_mean.len() != p || self.theta_var.len() != p {
            return Err(Error::Config(format!(
                "prior has {} means and {} variances for {p} parameters",
                self.theta_mean.len(),
                self.theta_var.len()
            )));
        }
        if self.theta_var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("prior variances must be positive".into()));
        }
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err(Error::Config("alpha0 and beta0 must be positive".into()));
        }
        Ok(())
    }

    pub fn log_prior_theta(&self, theta: &[f64]) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        theta
            .iter()
            .zip(&self.theta_mean)
            .zip(&self.theta_var)
            .map(|((t, m), v)| -0.5 * (ln2pi + v.ln() + (t - m).powi(2) / v))
            .sum()
    }

    pub fn v_prior(&self) -> Result<TruncatedBeta> {
        TruncatedBeta::new(self.alpha0, self.beta0, V_LOWER)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `θ` only, full sample.
    Betel,
    /// `(θ, s, v)` with indicator augmentation.
    Rbetel,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Betel => "betel",
            Method::Rbetel => "rbetel",
        }
    }
}

/// Additive pieces of the log kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTerms {
    pub log_prior_theta: f64,
    pub log_prior_v: f64,
    /// `K ln v + (n-K) ln(1-v)`.
    pub log_indicator: f64,
    /// `Σ_{s_i=1} ln(K w̃_i)`.
    pub log_el_ratio: f64,
}

impl KernelTerms {
    pub fn total(&self) -> f64 {
        let t = self.log_prior_theta + self.log_prior_v + self.log_indicator + self.log_el_ratio;
        if t.is_nan() {
            f64::NEG_INFINITY
        } else {
            t
        }
    }
}

/// `K ln v + (n-K) ln(1-v)` with `0 ln 0 = 0`.
pub fn log_indicator_prior(k: usize, n: usize, v: f64) -> f64 {
    let on = if k == 0 { 0.0 } else { k as f64 * v.ln() };
    let off = if k == n { 0.0 } else { (n - k) as f64 * (1.0 - v).ln() };
    on + off
}

/// Everything needed to evaluate the posterior kernel.
pub struct Target<'a, M: MomentFunction + ?Sized> {
    pub model: &'a M,
    pub data: &'a Dataset,
    pub priors: &'a Priors,
    pub solver: SolverOptions,
    v_prior: TruncatedBeta,
}

impl<'a, M: MomentFunction + ?Sized> Target<'a, M> {
    pub fn new(model: &'a M, data: &'a Dataset, priors: &'a Priors) -> Result<Self> {
        priors.validate(model.theta_dim())?;
        if model.g_dim() < model.theta_dim() {
            return Err(Error::Config(format!(
                "{} moment conditions cannot identify {} parameters",
                model.g_dim(),
                model.theta_dim()
            )));
        }
        Ok(Self {
            model,
            data,
            priors,
            solver: SolverOptions::default(),
            v_prior: priors.v_prior()?,
        })
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn v_prior(&self) -> &TruncatedBeta {
        &self.v_prior
    }

    /// Tilting solve on the active rows; the log EL ratio is negative infinity
    /// when the solve fails.
    pub fn el_term(&self, theta: &[f64], s: &IndicatorState) -> (f64, TiltingSolution) {
        let g = if s.k() == s.len() {
            g_matrix(self.model, self.data, theta, None)
        } else {
            g_matrix(self.model, self.data, theta, Some(s.active()))
        };
        match g {
            Ok(g) => {
                let sol = solve_tilting(&g, &self.solver);
                let value = if sol.is_usable() {
                    sol.log_etel
                } else {
                    f64::NEG_INFINITY
                };
                (value, sol)
            }
            Err(_) => (
                f64::NEG_INFINITY,
                TiltingSolution {
                    lambda: Vec::new(),
                    weights: Vec::new(),
                    log_etel: f64::NEG_INFINITY,
                    converged: false,
                    iterations: 0,
                    hull_ok: false,
                    gradient_norm: f64::NAN,
                },
            ),
        }
    }

    /// Kernel terms at `(θ, s, v)`. For [`Method::Betel`] only the `θ` prior
    /// and the full-sample ratio contribute.
    pub fn evaluate(
        &self,
        theta: &[f64],
        s: &IndicatorState,
        v: f64,
        method: Method,
    ) -> (KernelTerms, Option<TiltingSolution>) {
        let log_prior_theta = self.priors.log_prior_theta(theta);
        match method {
            Method::Betel => {
                let all = IndicatorState::all_active(self.n());
                let (lr, sol) = self.el_term(theta, &all);
                let terms = KernelTerms {
                    log_prior_theta,
                    log_prior_v: 0.0,
                    log_indicator: 0.0,
                    log_el_ratio: lr,
                };
                (terms, Some(sol))
            }
            Method::Rbetel => {
                let mut terms = KernelTerms {
                    log_prior_theta,
                    log_prior_v: self.v_prior.ln_pdf(v),
                    log_indicator: log_indicator_prior(s.k(), s.len(), v),
                    log_el_ratio: f64::NEG_INFINITY,
                };
                if !s.is_majority() {
                    return (terms, None);
                }
                let (lr, sol) = self.el_term(theta, s);
                terms.log_el_ratio = lr;
                (terms, Some(sol))
            }
        }
    }
}

/// Log unnormalized joint posterior of `(θ, s, v)`.
pub fn log_posterior_kernel<M: MomentFunction + ?Sized>(
    theta: &[f64],
    s: &IndicatorState,
    v: f64,
    model: &M,
    priors: &Priors,
    data: &Dataset,
) -> Result<f64> {
    if s.len() != data.len() {
        return Err(Error::InvalidInput(format!(
            "indicator length {} does not match {} observations",
            s.len(),
            data.len()
        )));
    }
    let target = Target::new(model, data, priors)?;
    Ok(target.evaluate(theta, s, v, Method::Rbetel).0.total())
}

/// Log unnormalized posterior of `θ` on the full sample.
pub fn betel_log_kernel<M: MomentFunction + ?Sized>(
    theta: &[f64],
    model: &M,
    priors: &Priors,
    data: &Dataset,
) -> Result<f64> {
    let target = Target::new(model, data, priors)?;
    let s = IndicatorState::all_active(data.len());
    Ok(target.evaluate(theta, &s, 1.0, Method::Betel).0.total())
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub indicators: IndicatorState,
    pub v: f64,
    pub terms: KernelTerms,
    pub log_kernel: f64,
    pub tilt: Option<TiltingSolution>,
}

impl ChainState {
    pub fn new<M: MomentFunction + ?Sized>(
        target: &Target<'_, M>,
        theta: Vec<f64>,
        indicators: IndicatorState,
        v: f64,
        method: Method,
    ) -> Self {
        let (terms, tilt) = target.evaluate(&theta, &indicators, v, method);
        Self {
            theta,
            indicators,
            v,
            log_kernel: terms.total(),
            terms,
            tilt,
        }
    }

    fn refresh_total(&mut self) {
        self.log_kernel = self.terms.total();
    }
}

/// Random-walk Metropolis–Hastings update of `θ` with per-coordinate step
/// sizes `step`. Only the `θ` prior and the ratio term change.
pub fn theta_step<M: MomentFunction + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target<'_, M>,
    method: Method,
    step: &[f64],
    rng: &mut R,
) -> bool {
    let proposal: Vec<f64> = state
        .theta
        .iter()
        .zip(step)
        .map(|(t, s)| t + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let s_eval;
    let s = match method {
        Method::Betel => {
            s_eval = IndicatorState::all_active(target.n());
            &s_eval
        }
        Method::Rbetel => &state.indicators,
    };
    let lp = target.priors.log_prior_theta(&proposal);
    let (lr, sol) = target.el_term(&proposal, s);
    let delta = (lp + lr) - (state.terms.log_prior_theta + state.terms.log_el_ratio);
    let u: f64 = rng.random();
    if lr.is_finite() && u.ln() < delta {
        state.theta = proposal;
        state.terms.log_prior_theta = lp;
        state.terms.log_el_ratio = lr;
        state.tilt = Some(sol);
        state.refresh_total();
        true
    } else {
        false
    }
}

/// Joint Metropolis–Hastings move on `(s, K)`.
pub fn indicator_step<M: MomentFunction + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target<'_, M>,
    proposal: &IndicatorProposal,
    rng: &mut R,
) -> bool {
    let k_prev = state.indicators.k();
    let k_new = proposal.q1_sample(k_prev, rng);
    let s_new = proposal.q2_sample(k_new, &state.indicators, rng);
    if s_new == state.indicators {
        return true;
    }
    let n = target.n();
    let log_fwd = proposal.q1_logpmf(k_new, k_prev)
        + proposal
            .q2_logpmf(&s_new, k_new, &state.indicators)
            .expect("proposal has the drawn count");
    let log_rev = proposal.q1_logpmf(k_prev, k_new)
        + proposal
            .q2_logpmf(&state.indicators, k_prev, &s_new)
            .expect("current state has its own count");
    let li = log_indicator_prior(k_new, n, state.v);
    let (lr, sol) = target.el_term(&state.theta, &s_new);
    let delta = (li + lr) - (state.terms.log_indicator + state.terms.log_el_ratio);
    let log_alpha = delta + log_rev - log_fwd;
    let u: f64 = rng.random();
    if lr.is_finite() && u.ln() < log_alpha {
        state.indicators = s_new;
        state.terms.log_indicator = li;
        state.terms.log_el_ratio = lr;
        state.tilt = Some(sol);
        state.refresh_total();
        true
    } else {
        false
    }
}

/// Gibbs draw of `v` from Beta(K+α0, n-K+β0) truncated to `(0.5, 1]`.
pub fn v_step<M: MomentFunction + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target<'_, M>,
    rng: &mut R,
) -> Result<()> {
    let n = target.n();
    let k = state.indicators.k();
    let conditional = TruncatedBeta::new(
        k as f64 + target.priors.alpha0,
        (n - k) as f64 + target.priors.beta0,
        V_LOWER,
    )?;
    let v = conditional.sample(rng);
    state.v = v;
    state.terms.log_prior_v = target.v_prior().ln_pdf(v);
    state.terms.log_indicator = log_indicator_prior(k, n, v);
    state.refresh_total();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub method: Method,
    pub n_burnin: usize,
    pub n_keep: usize,
    pub thin: usize,
    /// Initial random-walk step per coordinate; model default when `None`.
    pub rw_scale: Option<Vec<f64>>,
    pub tau: f64,
    pub c: f64,
    pub adapt: bool,
    pub seed: u64,
    pub init_theta: Option<Vec<f64>>,
    /// Store the full `s` draw matrix in addition to inclusion counts.
    pub keep_indicator_draws: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            method: Method::Rbetel,
            n_burnin: 4_000,
            n_keep: 8_000,
            thin: 1,
            rw_scale: None,
            tau: 0.8,
            c: 0.99,
            adapt: true,
            seed: 1,
            init_theta: None,
            keep_indicator_draws: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_keep == 0 {
            return Err(Error::Config("at least one kept draw is required".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::Config(format!("c must lie in (0, 1], got {}", self.c)));
        }
        if let Some(s) = &self.rw_scale {
            if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Config("random-walk scales must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Row-major binary matrix, one row per kept draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn new(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::new(cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidInput("ragged binary matrix".into()));
            }
            m.push(r);
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[bool]) {
        debug_assert_eq!(row.len(), self.cols);
        self.data.extend(row.iter().map(|&b| b as u8));
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Appends the rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::InvalidInput("column mismatch".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    /// Post-burn-in `θ` acceptance rate.
    pub theta: f64,
    /// Post-burn-in indicator acceptance rate; `None` without indicators.
    pub indicator: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub method: Method,
    pub parameter_names: Vec<String>,
    /// Row-major `draws × p`.
    pub theta_draws: Vec<f64>,
    pub p: usize,
    /// Empty for [`Method::Betel`].
    pub v_draws: Vec<f64>,
    pub k_draws: Vec<usize>,
    pub n_obs: usize,
    /// Number of kept draws with `s_i = 1`.
    pub inclusion_counts: Vec<u64>,
    pub indicator_draws: Option<BinaryMatrix>,
    pub acceptance: Acceptance,
    pub final_step: Vec<f64>,
    /// `(sweep, step multiplier)` sampled during burn-in.
    pub adaptation_trace: Vec<(usize, f64)>,
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.k_draws.len()
    }

    /// Draws of coordinate `j`.
    pub fn theta_column(&self, j: usize) -> Vec<f64> {
        self.theta_draws.iter().skip(j).step_by(self.p).copied().collect()
    }

    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        let m = self.n_draws() as f64;
        self.inclusion_counts.iter().map(|&c| c as f64 / m).collect()
    }
}

const INIT_ATTEMPTS: usize = 100;

/// Runs a chain seeded from `config.seed`.
pub fn run_chain<M: MomentFunction + ?Sized>(
    model: &M,
    priors: &Priors,
    data: &Dataset,
    config: &ChainConfig,
) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_chain_with_rng(model, priors, data, config, &mut rng, &mut |_, _| {})
}

/// Runs a chain drawing from `rng`. `progress(sweep, total)` is called after
/// every sweep.
pub fn run_chain_with_rng<M: MomentFunction + ?Sized, R: Rng + ?Sized>(
    model: &M,
    priors: &Priors,
    data: &Dataset,
    config: &ChainConfig,
    rng: &mut R,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<ChainOutput> {
    config.validate()?;
    let target = Target::new(model, data, priors)?;
    let n = data.len();
    let p = model.theta_dim();
    let method = config.method;
    if method == Method::Rbetel && !model.has_key_condition() {
        return Err(Error::Config(
            "the robust method needs at least one key condition".into(),
        ));
    }

    let base_step = match &config.rw_scale {
        Some(s) if s.len() == p => s.clone(),
        Some(s) => {
            return Err(Error::Config(format!(
                "{} random-walk scales given for {p} parameters",
                s.len()
            )))
        }
        None => model.default_step(data),
    };
    let theta0 = config
        .init_theta
        .clone()
        .or_else(|| model.initial_theta(data))
        .unwrap_or_else(|| vec![0.0; p]);
    if theta0.len() != p {
        return Err(Error::Config(format!(
            "initial theta has {} values for {p} parameters",
            theta0.len()
        )));
    }
    let v0 = match method {
        Method::Betel => 1.0,
        Method::Rbetel => target.v_prior().mean(),
    };

    let mut state = ChainState::new(&target, theta0.clone(), IndicatorState::all_active(n), v0, method);
    let mut attempt = 0;
    while !state.log_kernel.is_finite() {
        attempt += 1;
        if attempt > INIT_ATTEMPTS {
            return Err(Error::Chain(format!(
                "no initial state with a finite posterior kernel after {INIT_ATTEMPTS} attempts"
            )));
        }
        let spread = attempt as f64;
        let theta: Vec<f64> = theta0
            .iter()
            .zip(&base_step)
            .map(|(t, s)| t + spread * s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        state = ChainState::new(&target, theta, IndicatorState::all_active(n), v0, method);
    }

    let proposal = match method {
        Method::Rbetel => Some(IndicatorProposal::new(n, config.c, config.tau)?),
        Method::Betel => None,
    };

    let total = config.n_burnin + config.n_keep * config.thin;
    let mut log_mult = 0.0_f64;
    let mut step = base_step.clone();
    let mut theta_draws = Vec::with_capacity(config.n_keep * p);
    let mut v_draws = Vec::new();
    let mut k_draws = Vec::with_capacity(config.n_keep);
    let mut inclusion_counts = vec![0u64; n];
    let mut indicator_draws = config.keep_indicator_draws.then(|| BinaryMatrix::new(n));
    let mut adaptation_trace = Vec::new();
    let (mut theta_acc, mut ind_acc, mut post_sweeps) = (0usize, 0usize, 0usize);

    for sweep in 0..total {
        let burning = sweep < config.n_burnin;
        let accepted = theta_step(&mut state, &target, method, &step, rng);
        if burning && config.adapt {
            let gain = 1.0 / (sweep as f64 + 1.0).powf(0.6);
            let rate = if accepted { 1.0 } else { 0.0 };
            log_mult = (log_mult + gain * (rate - ADAPT_TARGET)).clamp(-30.0, 30.0);
            let mult = log_mult.exp();
            for (s, b) in step.iter_mut().zip(&base_step) {
                *s = b * mult;
            }
            if sweep % 100 == 0 || sweep + 1 == config.n_burnin {
                adaptation_trace.push((sweep, mult));
            }
        }
        let mut ind_accepted = false;
        if let Some(q) = &proposal {
            ind_accepted = indicator_step(&mut state, &target, q, rng);
            v_step(&mut state, &target, rng)?;
        }
        if !state.log_kernel.is_finite() {
            return Err(Error::Chain(format!(
                "current state lost its finite kernel at sweep {sweep}"
            )));
        }
        if !burning {
            post_sweeps += 1;
            theta_acc += accepted as usize;
            ind_acc += ind_accepted as usize;
            if (sweep - config.n_burnin) % config.thin == 0 {
                theta_draws.extend_from_slice(&state.theta);
                k_draws.push(state.indicators.k());
                if method == Method::Rbetel {
                    v_draws.push(state.v);
                }
                for &i in state.indicators.active() {
                    inclusion_counts[i] += 1;
                }
                if let Some(m) = indicator_draws.as_mut() {
                    m.push(state.indicators.bits());
                }
            }
        }
        progress(sweep + 1, total);
    }

    let acceptance = Acceptance {
        theta: theta_acc as f64 / post_sweeps as f64,
        indicator: proposal.map(|_| ind_acc as f64 / post_sweeps as f64),
    };
    Ok(ChainOutput {
        method,
        parameter_names: model.parameter_names(),
        theta_draws,
        p,
        v_draws,
        k_draws,
        n_obs: n,
        inclusion_counts,
        indicator_draws,
        acceptance,
        final_step: step,
        adaptation_trace,
    })
}
