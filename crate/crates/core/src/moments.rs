//! Moment functions for location and simple linear regression.
//!
//! Each observation contributes one row `g(x_i; θ)`. Rows always start with the
//! base orthogonality conditions and are followed by the selected key
//! conditions in a fixed order: third moment, Huber, scale anchor.
//!
//! Indicators are not multiplied in here. Excluding an observation is done by
//! dropping its row before the tilting solve, which gives the same weighted
//! sums as multiplying the row by zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etel::GMatrix;
use crate::robust::{self, MmConfig};

/// Normal-consistency factor for the median absolute deviation.
pub const MAD_NORMAL_CONSISTENCY: f64 = 1.4826;

/// Default Huber trim point.
pub const DEFAULT_EPSILON0: f64 = 1.5;

/// Huber-type clipping: `1` above `eps0`, `-1` below `-eps0`, `eps/eps0`
/// in between.
pub fn huber(eps: f64, eps0: f64) -> f64 {
    debug_assert!(eps0 > 0.0);
    if eps >= eps0 {
        1.0
    } else if eps <= -eps0 {
        -1.0
    } else {
        eps / eps0
    }
}

/// Median of a slice, averaging the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadEstimate {
    pub raw: f64,
    pub scaled: f64,
    /// Set when every observation equals the median.
    pub degenerate: bool,
}

/// Median absolute deviation, raw and scaled by [`MAD_NORMAL_CONSISTENCY`].
pub fn mad(x: &[f64]) -> Result<MadEstimate> {
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "MAD needs at least two observations, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    let med = median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let raw = median(&dev);
    Ok(MadEstimate {
        raw,
        scaled: MAD_NORMAL_CONSISTENCY * raw,
        degenerate: raw == 0.0,
    })
}

pub fn scaled_mad(x: &[f64]) -> Result<MadEstimate> {
    mad(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyCondition {
    /// `(x-μ)^3`, symmetry of the good data.
    ThirdMoment,
    /// `(x-μ) - H(x-μ)`; two components for regression.
    Huber,
    /// `(x-μ)^2 - MAD^2`, location only.
    MadScale,
    /// `e^2 - T` with a robust error scale `T`, regression only.
    RobustScale,
}

impl KeyCondition {
    /// Accepts both the short labels `c1`, `c2`, `c3` and descriptive names.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "c1" | "third" | "third_moment" | "skew" => Ok(Self::ThirdMoment),
            "c2" | "huber" => Ok(Self::Huber),
            "c3" | "mad" | "mad_scale" => Ok(Self::MadScale),
            "scale" | "robust_scale" | "t" => Ok(Self::RobustScale),
            other => Err(Error::Config(format!("unknown key condition '{other}'"))),
        }
    }

    /// Maps the scale key to the variant defined for `family`, so `c3` means
    /// the MAD key for location and the robust-scale key for regression.
    pub fn for_family(self, family: Family) -> Self {
        match (self, family) {
            (Self::MadScale, Family::LinearRegression) => Self::RobustScale,
            (Self::RobustScale, Family::Location) => Self::MadScale,
            (k, _) => k,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::ThirdMoment => "third_moment",
            Self::Huber => "huber",
            Self::MadScale => "mad_scale",
            Self::RobustScale => "robust_scale",
        }
    }
}

/// Parses a comma-separated key list; `none` or an empty string gives no keys.
pub fn parse_keys(list: &str) -> Result<Vec<KeyCondition>> {
    let trimmed = list.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    let mut keys = trimmed
        .split([',', '+', '&'])
        .filter(|s| !s.trim().is_empty())
        .map(KeyCondition::parse)
        .collect::<Result<Vec<_>>>()?;
    keys.sort();
    keys.dedup();
    Ok(keys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Location,
    LinearRegression,
}

/// Observations. For location models only `x` is used; regression models
/// need the response `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

impl Dataset {
    pub fn location(x: Vec<f64>) -> Result<Self> {
        let d = Self { x, y: None };
        d.validate()?;
        Ok(d)
    }

    pub fn regression(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let d = Self { x, y: Some(y) };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.x.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "dataset needs at least two observations, got {}",
                self.x.len()
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite regressor value".into()));
        }
        if let Some(y) = &self.y {
            if y.len() != self.x.len() {
                return Err(Error::InvalidInput(format!(
                    "x has {} values but y has {}",
                    self.x.len(),
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite response value".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Keeps only the listed observations.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: indices.iter().map(|&i| self.x[i]).collect(),
            y: self
                .y
                .as_ref()
                .map(|y| indices.iter().map(|&i| y[i]).collect()),
        }
    }
}

/// A moment function `g(x; θ)` evaluated observation by observation.
///
/// The sampler is generic over this trait so custom moment sets can be used
/// alongside [`MomentModel`].
pub trait MomentFunction: Sync {
    fn theta_dim(&self) -> usize;

    fn g_dim(&self) -> usize;

    /// Writes `g(x_i; θ)` into `out`, which has length [`Self::g_dim`].
    fn write_row(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]);

    /// Whether at least one outlier-discriminating condition is present.
    fn has_key_condition(&self) -> bool {
        true
    }

    /// A starting value expected to sit inside the hull region.
    fn initial_theta(&self, _data: &Dataset) -> Option<Vec<f64>> {
        None
    }

    /// Per-coordinate random-walk step used when none is configured.
    fn default_step(&self, data: &Dataset) -> Vec<f64> {
        vec![1.0 / (data.len() as f64).sqrt(); self.theta_dim()]
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.theta_dim()).map(|j| format!("theta{j}")).collect()
    }
}

/// Builds the moment matrix for the given observations (all of them when
/// `rows` is `None`).
pub fn g_matrix<M: MomentFunction + ?Sized>(
    model: &M,
    data: &Dataset,
    theta: &[f64],
    rows: Option<&[usize]>,
) -> Result<GMatrix> {
    if theta.len() != model.theta_dim() {
        return Err(Error::InvalidInput(format!(
            "theta has length {}, model expects {}",
            theta.len(),
            model.theta_dim()
        )));
    }
    let d = model.g_dim();
    let fill = |idx: &mut dyn Iterator<Item = usize>, count: usize| {
        let mut values = vec![0.0; count * d];
        for (slot, i) in values.chunks_exact_mut(d).zip(idx) {
            model.write_row(data, i, theta, slot);
        }
        GMatrix::new(count, d, values)
    };
    match rows {
        Some(r) => fill(&mut r.iter().copied(), r.len()),
        None => fill(&mut (0..data.len()), data.len()),
    }
}

/// Statistics frozen before sampling for the scale-anchored keys.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedStats {
    /// MAD of the observations; squared inside the location scale key.
    pub mad: Option<f64>,
    /// Variance-like robust error scale `T`, used as is.
    pub robust_scale_t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MadScaling {
    Raw,
    #[default]
    NormalConsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentModel {
    family: Family,
    keys: Vec<KeyCondition>,
    epsilon0: f64,
    stats: PrecomputedStats,
}

impl MomentModel {
    pub fn new(
        family: Family,
        keys: &[KeyCondition],
        epsilon0: f64,
        stats: PrecomputedStats,
    ) -> Result<Self> {
        let mut keys = keys.to_vec();
        keys.sort();
        keys.dedup();
        for &k in &keys {
            match (family, k) {
                (Family::Location, KeyCondition::RobustScale) => {
                    return Err(Error::Config(
                        "robust_scale key is defined for regression; use mad_scale for location"
                            .into(),
                    ))
                }
                (Family::LinearRegression, KeyCondition::MadScale) => {
                    return Err(Error::Config(
                        "mad_scale key is defined for location; use robust_scale for regression"
                            .into(),
                    ))
                }
                _ => {}
            }
        }
        if keys.contains(&KeyCondition::Huber) && !(epsilon0 > 0.0 && epsilon0.is_finite()) {
            return Err(Error::Config(format!(
                "Huber trim point must be positive, got {epsilon0}"
            )));
        }
        if keys.contains(&KeyCondition::MadScale) && stats.mad.is_none() {
            return Err(Error::Config("mad_scale key requires a precomputed MAD".into()));
        }
        if keys.contains(&KeyCondition::RobustScale) && stats.robust_scale_t.is_none() {
            return Err(Error::Config(
                "robust_scale key requires a precomputed robust error scale".into(),
            ));
        }
        Ok(Self {
            family,
            keys,
            epsilon0,
            stats,
        })
    }

    /// Location model with the MAD taken from `data`.
    pub fn location_for(
        data: &Dataset,
        keys: &[KeyCondition],
        epsilon0: f64,
        scaling: MadScaling,
    ) -> Result<Self> {
        let mut stats = PrecomputedStats::default();
        if keys.contains(&KeyCondition::MadScale) {
            let est = mad(&data.x)?;
            stats.mad = Some(match scaling {
                MadScaling::Raw => est.raw,
                MadScaling::NormalConsistent => est.scaled,
            });
        }
        Self::new(Family::Location, keys, epsilon0, stats)
    }

    /// Regression model with `T` taken from an MM fit of `data`.
    pub fn regression_for(
        data: &Dataset,
        keys: &[KeyCondition],
        epsilon0: f64,
        mm: &MmConfig,
    ) -> Result<Self> {
        let y = data
            .y
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("regression needs a response".into()))?;
        let mut stats = PrecomputedStats::default();
        if keys.contains(&KeyCondition::RobustScale) {
            stats.robust_scale_t = Some(robust::robust_error_scale(&data.x, y, mm)?);
        }
        Self::new(Family::LinearRegression, keys, epsilon0, stats)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn keys(&self) -> &[KeyCondition] {
        &self.keys
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    pub fn stats(&self) -> PrecomputedStats {
        self.stats
    }

    fn check_family(&self, family: Family, data: &Dataset) -> Result<()> {
        if self.family != family {
            return Err(Error::Config(format!(
                "model family is {:?}, not {:?}",
                self.family, family
            )));
        }
        if family == Family::LinearRegression && data.y.is_none() {
            return Err(Error::InvalidInput("regression needs a response".into()));
        }
        Ok(())
    }

    fn location_row(&self, x: f64, mu: f64, out: &mut [f64]) {
        let e = x - mu;
        out[0] = e;
        let mut j = 1;
        for &k in &self.keys {
            match k {
                KeyCondition::ThirdMoment => {
                    out[j] = e * e * e;
                    j += 1;
                }
                KeyCondition::Huber => {
                    out[j] = e - huber(e, self.epsilon0);
                    j += 1;
                }
                KeyCondition::MadScale => {
                    let m = self.stats.mad.unwrap_or(0.0);
                    out[j] = e * e - m * m;
                    j += 1;
                }
                KeyCondition::RobustScale => unreachable!("rejected at construction"),
            }
        }
    }

    fn regression_row(&self, x: f64, y: f64, delta: &[f64], out: &mut [f64]) {
        let e = y - delta[0] - delta[1] * x;
        out[0] = e;
        out[1] = e * x;
        let mut j = 2;
        for &k in &self.keys {
            match k {
                KeyCondition::ThirdMoment => {
                    out[j] = e * e * e;
                    j += 1;
                }
                KeyCondition::Huber => {
                    let h = huber(e, self.epsilon0);
                    out[j] = e - h;
                    out[j + 1] = e * x - h * x;
                    j += 2;
                }
                KeyCondition::RobustScale => {
                    out[j] = e * e - self.stats.robust_scale_t.unwrap_or(0.0);
                    j += 1;
                }
                KeyCondition::MadScale => unreachable!("rejected at construction"),
            }
        }
    }
}

impl MomentFunction for MomentModel {
    fn theta_dim(&self) -> usize {
        match self.family {
            Family::Location => 1,
            Family::LinearRegression => 2,
        }
    }

    fn g_dim(&self) -> usize {
        let base = self.theta_dim();
        let per_key = |k: &KeyCondition| match (self.family, k) {
            (Family::LinearRegression, KeyCondition::Huber) => 2,
            _ => 1,
        };
        base + self.keys.iter().map(per_key).sum::<usize>()
    }

    fn write_row(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]) {
        match self.family {
            Family::Location => self.location_row(data.x[i], theta[0], out),
            Family::LinearRegression => {
                let y = data.y.as_ref().expect("regression data carries a response");
                self.regression_row(data.x[i], y[i], theta, out)
            }
        }
    }

    fn has_key_condition(&self) -> bool {
        !self.keys.is_empty()
    }

    fn initial_theta(&self, data: &Dataset) -> Option<Vec<f64>> {
        match self.family {
            Family::Location => Some(vec![median(&data.x)]),
            Family::LinearRegression => {
                let y = data.y.as_ref()?;
                robust::mm_fit(&data.x, y, &MmConfig::default())
                    .or_else(|_| robust::ols_fit(&data.x, y))
                    .ok()
                    .map(|fit| fit.coefficients.to_vec())
            }
        }
    }

    fn default_step(&self, data: &Dataset) -> Vec<f64> {
        let n = data.len() as f64;
        match self.family {
            Family::Location => {
                let s = mad(&data.x).map(|m| m.scaled).unwrap_or(1.0);
                let s = if s > 0.0 { s } else { 1.0 };
                vec![2.4 * s / n.sqrt()]
            }
            Family::LinearRegression => {
                let y = data.y.as_ref().expect("regression data carries a response");
                match robust::ols_fit(&data.x, y) {
                    Ok(fit) if fit.std_errors.iter().all(|s| *s > 0.0) => {
                        fit.std_errors.iter().map(|s| 1.7 * s).collect()
                    }
                    _ => vec![1.0 / n.sqrt(); 2],
                }
            }
        }
    }

    fn parameter_names(&self) -> Vec<String> {
        match self.family {
            Family::Location => vec!["mu".into()],
            Family::LinearRegression => vec!["delta0".into(), "delta1".into()],
        }
    }
}

/// Location moment rows for all observations at `mu`.
pub fn location_g(data: &Dataset, mu: f64, model: &MomentModel) -> Result<GMatrix> {
    model.check_family(Family::Location, data)?;
    g_matrix(model, data, &[mu], None)
}

/// Regression moment rows for all observations at `delta = (δ0, δ1)`.
pub fn regression_g(data: &Dataset, delta: &[f64], model: &MomentModel) -> Result<GMatrix> {
    model.check_family(Family::LinearRegression, data)?;
    g_matrix(model, data, delta, None)
}
