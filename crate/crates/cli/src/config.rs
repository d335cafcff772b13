//! Resolved run configuration: command defaults, then a TOML file (or a
//! previous `manifest.json`), then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rbetel::moments::{Family, KeyCondition};
use rbetel::Method;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Betel,
    Rbetel,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Betel => vec![Method::Betel],
            MethodChoice::Rbetel => vec![Method::Rbetel],
            MethodChoice::Both => vec![Method::Betel, Method::Rbetel],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    /// Natural log for the bundled fixture, none otherwise.
    Auto,
    Ln,
    Log10,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FamilyChoice {
    Auto,
    Location,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub alpha0: f64,
    pub beta0: f64,
    pub theta_mean: f64,
    pub theta_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    pub burnin: usize,
    pub keep: usize,
    pub thin: usize,
    pub tau: f64,
    pub c: f64,
    pub adapt: bool,
    /// Also write `indicators.csv` with every kept `s` draw.
    pub keep_indicator_draws: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `None` selects the bundled brain/body fixture.
    pub path: Option<PathBuf>,
    pub x: String,
    /// Response column; absent for location models.
    pub y: Option<String>,
    pub family: FamilyChoice,
    pub log: LogBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// `sim41`, `location` or `regression`.
    pub design: String,
    pub n: usize,
    pub mu0: f64,
    pub xi0: f64,
    pub p_out: f64,
    pub v_star: f64,
    pub leverage_shift: f64,
    /// Key sets to compare, e.g. `["c1", "c1,c3"]`; `["all"]` runs every
    /// non-empty subset of the three keys.
    pub key_sets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateConfig {
    /// `location` or `regression`.
    pub experiment: String,
    pub reps: usize,
    pub n: usize,
    /// Outlier means for `location`.
    pub sizes: Vec<f64>,
    /// Good-data probabilities for `regression`.
    pub v_stars: Vec<f64>,
    pub leverage_shift: f64,
    /// Drop the leverage shift when `v* = 1`, making that design outlier free.
    pub clean_at_full_v: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizeConfig {
    pub draws: Option<PathBuf>,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub method: MethodChoice,
    /// Key conditions of the robust method, as written by the user.
    pub keys: Vec<String>,
    pub eps0: f64,
    pub level: f64,
    pub prior: PriorConfig,
    pub chain: ChainSettings,
    pub data: DataConfig,
    pub simulate: SimulateConfig,
    pub replicate: ReplicateConfig,
    pub summarize: SummarizeConfig,
}

impl RunConfig {
    pub fn defaults(command: &str) -> Self {
        let (alpha0, beta0, burnin, keep) = match command {
            "simulate" => (50.0, 5.0, 10_000, 20_000),
            "replicate" => (500.0, 50.0, 4_000, 8_000),
            _ => (30.0, 15.0, 20_000, 30_000),
        };
        Self {
            command: command.to_string(),
            seed: 1,
            method: MethodChoice::Both,
            keys: vec!["c1".into(), "c2".into(), "c3".into()],
            eps0: 1.5,
            level: 0.95,
            prior: PriorConfig {
                alpha0,
                beta0,
                theta_mean: 0.0,
                theta_var: 100.0,
            },
            chain: ChainSettings {
                burnin,
                keep,
                thin: 1,
                tau: 0.8,
                c: 0.99,
                adapt: true,
                keep_indicator_draws: false,
            },
            data: DataConfig {
                path: None,
                x: "body_kg".into(),
                y: Some("brain_g".into()),
                family: FamilyChoice::Auto,
                log: LogBase::Auto,
            },
            simulate: SimulateConfig {
                design: "sim41".into(),
                n: 100,
                mu0: 1.0,
                xi0: 6.0,
                p_out: 0.05,
                v_star: 0.95,
                leverage_shift: -10.0,
                key_sets: vec!["all".into()],
            },
            replicate: ReplicateConfig {
                experiment: "location".into(),
                reps: 20,
                n: 500,
                sizes: vec![2.0, 4.0, 6.0],
                v_stars: vec![1.0, 0.98, 0.95, 0.92],
                leverage_shift: -10.0,
                clean_at_full_v: true,
            },
            summarize: SummarizeConfig {
                draws: None,
                method: "unknown".into(),
            },
        }
    }

    /// Parsed key conditions, mapped to the variants defined for `family`.
    pub fn key_conditions(&self, family: Family) -> anyhow::Result<Vec<KeyCondition>> {
        parse_key_list(&self.keys.join(","), family)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            bail!("level must lie in (0, 1), got {}", self.level);
        }
        if !(self.eps0 > 0.0) {
            bail!("eps0 must be positive, got {}", self.eps0);
        }
        if !(self.prior.alpha0 > 0.0 && self.prior.beta0 > 0.0) {
            bail!("alpha0 and beta0 must be positive");
        }
        if !(self.prior.theta_var > 0.0) {
            bail!("prior variance must be positive");
        }
        let c = &self.chain;
        if c.keep == 0 || c.thin == 0 {
            bail!("keep and thin must be at least 1");
        }
        if !(c.tau > 0.0 && c.tau < 1.0) {
            bail!("tau must lie in (0, 1), got {}", c.tau);
        }
        if !(c.c > 0.0 && c.c <= 1.0) {
            bail!("c must lie in (0, 1], got {}", c.c);
        }
        for set in &self.keys {
            parse_key_list(set, Family::Location)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_key_list(list: &str, family: Family) -> anyhow::Result<Vec<KeyCondition>> {
    let mut keys: Vec<KeyCondition> = rbetel::moments::parse_keys(list)
        .map_err(anyhow::Error::from)?
        .into_iter()
        .map(|k| k.for_family(family))
        .collect();
    keys.sort();
    keys.dedup();
    Ok(keys)
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Layers a config file over the defaults of `command`. A `manifest.json`
/// from an earlier run is accepted; its `config` block is used.
pub fn load(command: &str, path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let defaults = RunConfig::defaults(command);
    let Some(path) = path else {
        return Ok(defaults);
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let patch: Value = if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing JSON config {}", path.display()))?;
        match v.get("config") {
            Some(c) => c.clone(),
            None => v,
        }
    } else {
        let t: toml::Value =
            toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))?;
        serde_json::to_value(t)?
    };
    if let Some(cmd) = patch.get("command").and_then(Value::as_str) {
        if cmd != command {
            bail!("config {} was written for `{cmd}`, not `{command}`", path.display());
        }
    }
    let mut base = serde_json::to_value(&defaults)?;
    merge(&mut base, patch);
    serde_json::from_value(base).with_context(|| format!("invalid config {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            tool: "rbetel".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            seed: config.seed,
            config: config.clone(),
        }
    }
}
