//! Posterior summaries: means, SDs, batch-means standard errors, equal-tail
//! intervals, inclusion probabilities and kernel density grids.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{Acceptance, BinaryMatrix, ChainOutput};

/// Fewest draws [`summarize`] accepts.
pub const MIN_DRAWS: usize = 100;
pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub post_mean: f64,
    pub post_sd: f64,
    pub ts_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub index: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
    pub inclusion: Vec<f64>,
}

/// The on-disk `summary.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub method: String,
    pub parameters: Vec<ParameterSummary>,
    pub inclusion: Vec<Inclusion>,
    pub acceptance: Acceptance,
    pub seed: u64,
    pub config_hash: String,
}

impl SummaryDocument {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_sd(x: &[f64], m: f64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Type-7 empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Batch-means standard error with `⌊√M⌋` equal batches; the remainder at the
/// end is dropped.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let m = x.len();
    let n_batches = (m as f64).sqrt().floor() as usize;
    let size = m / n_batches.max(1);
    if n_batches < 2 || size == 0 {
        return 0.0;
    }
    let means: Vec<f64> = x.chunks_exact(size).take(n_batches).map(mean).collect();
    let grand = mean(&means);
    let var = means.iter().map(|b| (b - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (var / n_batches as f64).sqrt()
}

/// Summary of one parameter's draws at credible level `level`.
pub fn summarize_column(name: &str, draws: &[f64], level: f64) -> Result<ParameterSummary> {
    if draws.len() < MIN_DRAWS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_DRAWS} draws to summarize, got {}",
            draws.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("credible level {level} outside (0, 1)")));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite draw for {name}")));
    }
    let m = mean(draws);
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let constant = sorted[0] == sorted[sorted.len() - 1];
    Ok(ParameterSummary {
        name: name.to_string(),
        post_mean: if constant { sorted[0] } else { m },
        post_sd: if constant { 0.0 } else { sample_sd(draws, m) },
        ts_se: if constant { 0.0 } else { batch_means_se(draws) },
        ci_low: quantile_sorted(&sorted, tail),
        ci_high: quantile_sorted(&sorted, 1.0 - tail),
    })
}

/// Summaries of a row-major `M × p` draw matrix.
pub fn summarize(draws: &[f64], p: usize, names: &[String], level: f64) -> Result<Vec<ParameterSummary>> {
    if p == 0 || draws.len() % p != 0 {
        return Err(Error::InvalidInput(format!(
            "{} values do not form rows of width {p}",
            draws.len()
        )));
    }
    (0..p)
        .map(|j| {
            let col: Vec<f64> = draws.iter().skip(j).step_by(p).copied().collect();
            let name = names.get(j).cloned().unwrap_or_else(|| format!("theta{j}"));
            summarize_column(&name, &col, level)
        })
        .collect()
}

/// Column means of a binary draw matrix.
pub fn inclusion_probs(s_draws: &BinaryMatrix) -> Vec<f64> {
    let mut counts = vec![0u64; s_draws.cols()];
    for r in 0..s_draws.rows() {
        for (c, &b) in counts.iter_mut().zip(s_draws.row(r)) {
            *c += b as u64;
        }
    }
    let m = s_draws.rows().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / m).collect()
}

/// Full summary of a chain at 95%.
pub fn summarize_chain(out: &ChainOutput) -> Result<PosteriorSummary> {
    Ok(PosteriorSummary {
        parameters: summarize(&out.theta_draws, out.p, &out.parameter_names, 0.95)?,
        inclusion: out.inclusion_probabilities(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// All draws were identical; the grid holds that single value.
    pub spike: bool,
}

impl DensityGrid {
    /// Trapezoidal integral of the density.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    pub fn write_csv(&self, path: &Path, value_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([value_name, "density"])?;
        if self.spike {
            w.write_record([format!("{}", self.grid[0]), "inf".to_string()])?;
        } else {
            for (x, d) in self.grid.iter().zip(&self.density) {
                w.write_record([format!("{x}"), format!("{d}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bandwidth {
    /// `0.9 min(sd, IQR/1.34) M^{-1/5}`.
    #[default]
    Silverman,
}

/// Gaussian kernel density estimate on `n_points` equally spaced points
/// covering `mean ± 4 sd` and every draw `± 3h`.
pub fn density_grid(draws: &[f64], n_points: usize, rule: Bandwidth) -> Result<DensityGrid> {
    if draws.is_empty() || n_points < 2 {
        return Err(Error::InvalidInput("density grid needs draws and two or more points".into()));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite draw in density input".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Ok(DensityGrid {
            grid: vec![lo],
            density: vec![f64::INFINITY],
            spike: true,
        });
    }
    let m = mean(draws);
    let sd = sample_sd(draws, m);
    let h = match rule {
        Bandwidth::Silverman => {
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * (draws.len() as f64).powf(-0.2)
        }
    };
    let start = (m - 4.0 * sd).min(lo - 3.0 * h);
    let end = (m + 4.0 * sd).max(hi + 3.0 * h);
    let dx = (end - start) / (n_points - 1) as f64;
    let grid: Vec<f64> = (0..n_points).map(|i| start + i as f64 * dx).collect();
    let norm = 1.0 / (draws.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    // kernels beyond 8h contribute below 1e-14
    let density = grid
        .iter()
        .map(|&x| {
            let a = sorted.partition_point(|&d| d < x - 8.0 * h);
            let b = sorted.partition_point(|&d| d <= x + 8.0 * h);
            sorted[a..b]
                .iter()
                .map(|d| (-0.5 * ((x - d) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(DensityGrid {
        grid,
        density,
        spike: false,
    })
}

/// Writes `draws.csv`: one column per parameter, plus `v` and `K` when
/// present.
pub fn write_draws_csv(out: &ChainOutput, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = out.parameter_names.clone();
    let has_v = !out.v_draws.is_empty();
    if has_v {
        header.push("v".into());
    }
    header.push("K".into());
    w.write_record(&header)?;
    for (r, row) in out.theta_draws.chunks_exact(out.p).enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        if has_v {
            rec.push(format!("{:e}", out.v_draws[r]));
        }
        rec.push(out.k_draws[r].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `draws.csv` back as `(names, row-major θ draws)`, skipping the
/// `v` and `K` columns.
pub fn read_draws_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let keep: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| *h != "v" && *h != "K")
        .map(|(i, _)| i)
        .collect();
    let names = keep.iter().map(|&i| header[i].to_string()).collect();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for &i in &keep {
            let field = rec.get(i).unwrap_or("");
            values.push(field.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!(
                    "draws row {}: cannot parse {field:?} in column {}",
                    line + 2,
                    &header[i]
                ))
            })?);
        }
    }
    Ok((names, values))
}

pub fn write_inclusion_csv(probs: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "prob"])?;
    for (i, p) in probs.iter().enumerate() {
        w.write_record([i.to_string(), format!("{p}")])?;
    }
    w.flush()?;
    Ok(())
}
