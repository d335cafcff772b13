//! Simulation designs and replication studies.
//!
//! Each replicate gets its own RNG streams derived from `(seed, replicate,
//! stream)`, so results do not depend on how replicates are scheduled.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{Dataset, KeyCondition, MadScaling, MomentModel};
use crate::parallel::{map_range, Execution};
use crate::posterior::{summarize_chain, ParameterSummary};
use crate::robust::MmConfig;
use crate::sampler::{run_chain, ChainConfig, Method, Priors};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `stream` for replicate `rep`.
pub fn derive_seed(seed: u64, rep: u64, stream: u64) -> u64 {
    mix(mix(mix(seed) ^ rep) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Stream ids: data generation, then one per method.
pub const DATA_STREAM: u64 = 0;

pub fn method_stream(method: Method) -> u64 {
    match method {
        Method::Betel => 1,
        Method::Rbetel => 2,
    }
}

/// `μ0 + e` with probability `1 - p_out`, `ξ0 + e` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationDesign {
    pub n: usize,
    pub mu0: f64,
    pub xi0: f64,
    pub p_out: f64,
}

impl LocationDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!("location design needs n >= 10, got {}", self.n)));
        }
        if !(0.0..0.5).contains(&self.p_out) {
            return Err(Error::Config(format!("p_out must lie in [0, 0.5), got {}", self.p_out)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationSample {
    pub x: Vec<f64>,
    /// Drawn from the `ξ0` component.
    pub outlier: Vec<bool>,
}

pub fn gen_location_data<R: Rng + ?Sized>(design: &LocationDesign, rng: &mut R) -> Result<LocationSample> {
    design.validate()?;
    let mut x = Vec::with_capacity(design.n);
    let mut outlier = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let bad = rng.random::<f64>() < design.p_out;
        let e: f64 = rng.sample(StandardNormal);
        x.push(if bad { design.xi0 } else { design.mu0 } + e);
        outlier.push(bad);
    }
    Ok(LocationSample { x, outlier })
}

/// Sorted `x ~ N(0, x_variance)`; `y = δ0 + δ1 x + e` with probability `v*`,
/// errors inflated by `inflation` otherwise; the `n_leverage` largest-`x`
/// responses are then shifted by `leverage_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDesign {
    pub n: usize,
    pub delta0_star: f64,
    pub delta1_star: f64,
    pub v_star: f64,
    pub x_variance: f64,
    pub inflation: f64,
    pub leverage_shift: f64,
    pub n_leverage: usize,
}

impl RegressionDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 + self.n_leverage {
            return Err(Error::Config(format!(
                "regression design needs n >= {}, got {}",
                10 + self.n_leverage,
                self.n
            )));
        }
        if !(self.v_star > 0.5 && self.v_star <= 1.0) {
            return Err(Error::Config(format!("v* must lie in (0.5, 1], got {}", self.v_star)));
        }
        if !(self.x_variance > 0.0) {
            return Err(Error::Config("x variance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Error drawn from the inflated component.
    pub inflated: Vec<bool>,
    /// Response shifted as a leverage point.
    pub leverage: Vec<bool>,
}

impl RegressionSample {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::regression(self.x.clone(), self.y.clone())
    }
}

pub fn gen_regression_data<R: Rng + ?Sized>(
    design: &RegressionDesign,
    rng: &mut R,
) -> Result<RegressionSample> {
    design.validate()?;
    let sd = design.x_variance.sqrt();
    let mut x: Vec<f64> = (0..design.n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    x.sort_by(f64::total_cmp);
    let mut y = Vec::with_capacity(design.n);
    let mut inflated = Vec::with_capacity(design.n);
    for &xi in &x {
        let bad = rng.random::<f64>() >= design.v_star;
        let e: f64 = rng.sample(StandardNormal);
        let scale = if bad { design.inflation } else { 1.0 };
        y.push(design.delta0_star + design.delta1_star * xi + scale * e);
        inflated.push(bad);
    }
    let first = design.n - design.n_leverage;
    let mut leverage = vec![false; design.n];
    for i in first..design.n {
        y[i] += design.leverage_shift;
        leverage[i] = design.leverage_shift != 0.0;
    }
    Ok(RegressionSample { x, y, inflated, leverage })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Design {
    Location(LocationDesign),
    Regression(RegressionDesign),
}

impl Design {
    pub fn n(&self) -> usize {
        match self {
            Design::Location(d) => d.n,
            Design::Regression(d) => d.n,
        }
    }

    /// Designed parameter values.
    pub fn truth(&self) -> Vec<f64> {
        match self {
            Design::Location(d) => vec![d.mu0],
            Design::Regression(d) => vec![d.delta0_star, d.delta1_star],
        }
    }

    /// Dataset plus per-observation contamination flags.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Dataset, Vec<bool>)> {
        match self {
            Design::Location(d) => {
                let s = gen_location_data(d, rng)?;
                Ok((Dataset::location(s.x)?, s.outlier))
            }
            Design::Regression(d) => {
                let s = gen_regression_data(d, rng)?;
                let flags = s.inflated.iter().zip(&s.leverage).map(|(a, b)| *a || *b).collect();
                Ok((s.dataset()?, flags))
            }
        }
    }
}

/// Moments, priors and chain settings shared by every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    /// Key conditions for the robust method; the plain method always uses the
    /// base conditions only.
    pub keys: Vec<KeyCondition>,
    pub epsilon0: f64,
    #[serde(default)]
    pub mad_scaling: MadScaling,
    #[serde(default)]
    pub mm: MmConfig,
    pub alpha0: f64,
    pub beta0: f64,
    #[serde(default = "default_prior_var")]
    pub theta_prior_var: f64,
    /// Seed and method fields are overwritten per run.
    pub chain: ChainConfig,
}

fn default_prior_var() -> f64 {
    100.0
}

impl AnalysisSpec {
    pub fn model_for(&self, data: &Dataset, method: Method) -> Result<MomentModel> {
        let keys: &[KeyCondition] = match method {
            Method::Betel => &[],
            Method::Rbetel => &self.keys,
        };
        if data.y.is_some() {
            MomentModel::regression_for(data, keys, self.epsilon0, &self.mm)
        } else {
            MomentModel::location_for(data, keys, self.epsilon0, self.mad_scaling)
        }
    }

    pub fn priors(&self, p: usize) -> Priors {
        Priors {
            theta_mean: vec![0.0; p],
            theta_var: vec![self.theta_prior_var; p],
            alpha0: self.alpha0,
            beta0: self.beta0,
        }
    }

    /// Runs and summarizes one chain.
    pub fn fit(&self, data: &Dataset, method: Method, seed: u64) -> Result<RunResult> {
        use crate::moments::MomentFunction;
        let model = self.model_for(data, method)?;
        let priors = self.priors(model.theta_dim());
        let cfg = ChainConfig {
            method,
            seed,
            ..self.chain.clone()
        };
        let out = run_chain(&model, &priors, data, &cfg)?;
        let summary = summarize_chain(&out)?;
        Ok(RunResult {
            parameters: summary.parameters,
            inclusion: summary.inclusion,
            theta_acceptance: out.acceptance.theta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub parameters: Vec<ParameterSummary>,
    pub inclusion: Vec<f64>,
    pub theta_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub design: Design,
    pub analysis: AnalysisSpec,
    pub methods: Vec<Method>,
    pub n_reps: usize,
    pub seed: u64,
}

/// Fraction of `[lo, hi]` intervals containing `truth`, boundaries included.
pub fn coverage(intervals: &[(f64, f64)], truth: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::InvalidInput("coverage of an empty interval list".into()));
    }
    let hits = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub name: String,
    pub truth: f64,
    pub av_post_mean: f64,
    pub av_post_sd: f64,
    pub av_ts_se: f64,
    pub poc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub method: Method,
    pub parameters: Vec<ParameterReport>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub av_theta_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub method: Method,
    /// `None` when the chain failed.
    pub result: Option<RunResult>,
    pub error: Option<String>,
    /// Contamination flags of the generated dataset.
    pub contaminated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub experiment: String,
    pub reports: Vec<ReplicationReport>,
    pub records: Vec<ReplicateRecord>,
}

fn aggregate(method: Method, truth: &[f64], records: &[&ReplicateRecord]) -> Result<ReplicationReport> {
    let ok: Vec<&RunResult> = records.iter().filter_map(|r| r.result.as_ref()).collect();
    let n_failed = records.len() - ok.len();
    if ok.is_empty() {
        return Err(Error::Chain(format!("every {} replicate failed", method.label())));
    }
    let m = ok.len() as f64;
    let parameters = truth
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let avg = |f: fn(&ParameterSummary) -> f64| ok.iter().map(|r| f(&r.parameters[j])).sum::<f64>() / m;
            let cis: Vec<(f64, f64)> = ok
                .iter()
                .map(|r| (r.parameters[j].ci_low, r.parameters[j].ci_high))
                .collect();
            Ok(ParameterReport {
                name: ok[0].parameters[j].name.clone(),
                truth: t,
                av_post_mean: avg(|p| p.post_mean),
                av_post_sd: avg(|p| p.post_sd),
                av_ts_se: avg(|p| p.ts_se),
                poc: coverage(&cis, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationReport {
        method,
        parameters,
        n_ok: ok.len(),
        n_failed,
        av_theta_acceptance: ok.iter().map(|r| r.theta_acceptance).sum::<f64>() / m,
    })
}

/// Runs every method on `n_reps` generated datasets. Failed chains are
/// excluded and counted; more than 10% failures for a method is an error.
pub fn replicate(exp: &Experiment, exec: Execution) -> Result<ReplicationOutcome> {
    if exp.n_reps < 2 {
        return Err(Error::Config(format!("replication needs n_reps >= 2, got {}", exp.n_reps)));
    }
    if exp.methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    exp.analysis.chain.validate()?;
    let jobs: Vec<(usize, Method)> = (0..exp.n_reps)
        .flat_map(|r| exp.methods.iter().map(move |&m| (r, m)))
        .collect();
    let records = map_range(jobs.len(), exec, |j| {
        let (rep, method) = jobs[j];
        let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(exp.seed, rep as u64, DATA_STREAM));
        let generated = exp.design.generate(&mut data_rng);
        let (data, flags) = match generated {
            Ok(v) => v,
            Err(e) => return Err(e),
        };
        let seed = derive_seed(exp.seed, rep as u64, method_stream(method));
        let (result, error) = match exp.analysis.fit(&data, method, seed) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok(ReplicateRecord {
            rep,
            method,
            result,
            error,
            contaminated: flags,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let truth = exp.design.truth();
    let mut reports = Vec::new();
    for &method in &exp.methods {
        let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
        let failed = mine.iter().filter(|r| r.result.is_none()).count();
        if failed * 10 > mine.len() {
            let first = mine.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            return Err(Error::Chain(format!(
                "{failed} of {} {} replicates failed (first: {first})",
                mine.len(),
                method.label()
            )));
        }
        reports.push(aggregate(method, &truth, &mine)?);
    }
    Ok(ReplicationOutcome {
        experiment: exp.name.clone(),
        reports,
        records,
    })
}

impl ReplicationOutcome {
    /// One row per method and parameter.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "experiment", "method", "parameter", "truth", "Av.Post.Mean", "Av.Post.SD", "Av.TS.SE",
            "P.O.C", "n_ok", "n_failed",
        ])?;
        for r in &self.reports {
            for p in &r.parameters {
                w.write_record([
                    self.experiment.clone(),
                    r.method.label().to_string(),
                    p.name.clone(),
                    format!("{}", p.truth),
                    format!("{:.6}", p.av_post_mean),
                    format!("{:.6}", p.av_post_sd),
                    format!("{:.6}", p.av_ts_se),
                    format!("{:.4}", p.poc),
                    r.n_ok.to_string(),
                    r.n_failed.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Shipped experiments. Draw counts are desk scale; override `chain` to run
/// the full protocol.
pub mod presets {
    use super::*;

    pub const DESK_REPS: usize = 20;
    pub const DESK_N: usize = 500;

    fn all_location_keys() -> Vec<KeyCondition> {
        vec![KeyCondition::ThirdMoment, KeyCondition::Huber, KeyCondition::MadScale]
    }

    fn all_regression_keys() -> Vec<KeyCondition> {
        vec![KeyCondition::ThirdMoment, KeyCondition::Huber, KeyCondition::RobustScale]
    }

    fn desk_chain() -> ChainConfig {
        ChainConfig {
            n_burnin: 4_000,
            n_keep: 8_000,
            ..ChainConfig::default()
        }
    }

    /// Single contaminated location dataset: n = 100, μ0 = 1, ξ0 = 6.
    pub fn sim41_design() -> LocationDesign {
        LocationDesign {
            n: 100,
            mu0: 1.0,
            xi0: 6.0,
            p_out: 0.05,
        }
    }

    pub fn sim41_analysis(keys: Vec<KeyCondition>) -> AnalysisSpec {
        AnalysisSpec {
            keys,
            epsilon0: 1.5,
            mad_scaling: MadScaling::NormalConsistent,
            mm: MmConfig::default(),
            alpha0: 50.0,
            beta0: 5.0,
            theta_prior_var: 100.0,
            chain: ChainConfig {
                n_burnin: 10_000,
                n_keep: 20_000,
                ..ChainConfig::default()
            },
        }
    }

    pub fn location_grid(xi0: f64) -> Experiment {
        Experiment {
            name: format!("location_xi{xi0}"),
            design: Design::Location(LocationDesign {
                n: DESK_N,
                mu0: 1.0,
                xi0,
                p_out: 0.05,
            }),
            analysis: AnalysisSpec {
                keys: all_location_keys(),
                epsilon0: 1.5,
                mad_scaling: MadScaling::NormalConsistent,
                mm: MmConfig::default(),
                alpha0: 500.0,
                beta0: 50.0,
                theta_prior_var: 100.0,
                chain: desk_chain(),
            },
            methods: vec![Method::Betel, Method::Rbetel],
            n_reps: DESK_REPS,
            seed: 20_240_402,
        }
    }

    /// `v* = 1` carries no leverage shift: that design is outlier free.
    pub fn regression_grid(v_star: f64) -> Experiment {
        Experiment {
            name: format!("regression_v{v_star}"),
            design: Design::Regression(RegressionDesign {
                n: DESK_N,
                delta0_star: 2.0,
                delta1_star: 1.0,
                v_star,
                x_variance: 5.0,
                inflation: 3.0,
                leverage_shift: if v_star < 1.0 { -10.0 } else { 0.0 },
                n_leverage: 3,
            }),
            analysis: AnalysisSpec {
                keys: all_regression_keys(),
                epsilon0: 1.5,
                mad_scaling: MadScaling::NormalConsistent,
                mm: MmConfig::default(),
                alpha0: 500.0,
                beta0: 50.0,
                theta_prior_var: 100.0,
                chain: desk_chain(),
            },
            methods: vec![Method::Betel, Method::Rbetel],
            n_reps: DESK_REPS,
            seed: 20_240_403,
        }
    }

    pub const LOCATION_SIZES: [f64; 3] = [2.0, 4.0, 6.0];
    pub const REGRESSION_V_STARS: [f64; 4] = [1.0, 0.98, 0.95, 0.92];

    /// Settings for the brain/body regression.
    pub fn empirical_analysis() -> AnalysisSpec {
        AnalysisSpec {
            keys: all_regression_keys(),
            epsilon0: 1.5,
            mad_scaling: MadScaling::NormalConsistent,
            mm: MmConfig::default(),
            alpha0: 30.0,
            beta0: 15.0,
            theta_prior_var: 100.0,
            chain: ChainConfig {
                n_burnin: 20_000,
                n_keep: 30_000,
                ..ChainConfig::default()
            },
        }
    }
}
