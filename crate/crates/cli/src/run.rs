//! Command bodies. Each writes `manifest.json` first, then its outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbetel::moments::{Dataset, Family, KeyCondition, MadScaling, MomentFunction, MomentModel};
use rbetel::parallel::{map_slice, with_workers, Execution};
use rbetel::posterior::{
    density_grid, read_draws_csv, summarize as summarize_draws, write_draws_csv, write_inclusion_csv, Bandwidth,
    Inclusion, ParameterSummary, SummaryDocument, DEFAULT_GRID_POINTS,
};
use rbetel::robust::MmConfig;
use rbetel::sampler::{Acceptance, ChainConfig, ChainOutput, Method, Priors};
use rbetel::simlab::{
    self, derive_seed, method_stream, Design, Experiment, LocationDesign, RegressionDesign,
    DATA_STREAM,
};

use crate::config::{FamilyChoice, LogBase, Manifest, RunConfig};
use crate::Failure;

const FIXTURE: &str = include_str!("../data/animals65.csv");

pub struct Context {
    pub out: PathBuf,
    pub workers: usize,
}

impl Context {
    fn execution(&self) -> Execution {
        Execution::from_workers(self.workers)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// Library errors about bad configuration or data exit with 2, the rest 3.
fn classify(stage: &str, e: rbetel::Error) -> Failure {
    let err = anyhow!(e.clone()).context(stage.to_string());
    match e {
        rbetel::Error::Config(_) | rbetel::Error::InvalidInput(_) | rbetel::Error::Degenerate(_) => {
            Failure::Input(err)
        }
        rbetel::Error::Chain(_) | rbetel::Error::Io(_) => Failure::Runtime(err),
    }
}

fn prepare_out(ctx: &Context, cfg: &RunConfig) -> Outcome {
    std::fs::create_dir_all(&ctx.out)
        .with_context(|| format!("creating output directory {}", ctx.out.display()))
        .map_err(runtime)?;
    let manifest = Manifest::new(cfg);
    write_json(&ctx.out.join("manifest.json"), &manifest)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn io_stage(stage: &str) -> impl Fn(rbetel::Error) -> Failure + '_ {
    move |e| runtime(anyhow!(e).context(stage.to_string()))
}

// ---------------------------------------------------------------- data

/// Reads named numeric columns from CSV text.
fn read_columns(text: &str, source: &str, names: &[&str]) -> Outcome<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .with_context(|| format!("reading header of {source}"))
        .map_err(input)?
        .clone();
    let idx = names
        .iter()
        .map(|n| {
            header.iter().position(|h| h == *n).ok_or_else(|| {
                input(anyhow!(
                    "column '{n}' not found in {source} (available: {})",
                    header.iter().collect::<Vec<_>>().join(", ")
                ))
            })
        })
        .collect::<Outcome<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {source}")).map_err(input)?;
        for (c, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            let v = field.parse::<f64>().map_err(|_| {
                input(anyhow!(
                    "{source} line {}: column '{}' value {field:?} is not a number",
                    row + 2,
                    names[c]
                ))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn transform(values: &mut [f64], log: LogBase, column: &str) -> Outcome {
    let f: fn(f64) -> f64 = match log {
        LogBase::Ln => f64::ln,
        LogBase::Log10 => f64::log10,
        LogBase::None | LogBase::Auto => return Ok(()),
    };
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(input(anyhow!("cannot take the log of {v} in column '{column}'")));
    }
    values.iter_mut().for_each(|v| *v = f(*v));
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Outcome<(Dataset, Family)> {
    let (text, source) = match &cfg.data.path {
        Some(p) => (
            std::fs::read_to_string(p)
                .with_context(|| format!("reading data {}", p.display()))
                .map_err(input)?,
            p.display().to_string(),
        ),
        None => (FIXTURE.to_string(), "bundled animals65.csv".to_string()),
    };
    let family = match (cfg.data.family, &cfg.data.y) {
        (FamilyChoice::Location, _) | (FamilyChoice::Auto, None) => Family::Location,
        (FamilyChoice::Regression, None) => {
            return Err(input(anyhow!("regression needs a response column (--y)")))
        }
        (_, Some(_)) => Family::LinearRegression,
    };
    let mut names = vec![cfg.data.x.as_str()];
    if family == Family::LinearRegression {
        names.push(cfg.data.y.as_deref().unwrap_or_default());
    }
    let mut cols = read_columns(&text, &source, &names)?;
    for (c, name) in cols.iter_mut().zip(&names) {
        transform(c, cfg.data.log, name)?;
    }
    let data = match family {
        Family::Location => Dataset::location(cols.remove(0)),
        Family::LinearRegression => {
            let y = cols.remove(1);
            Dataset::regression(cols.remove(0), y)
        }
    }
    .map_err(|e| classify("loading data", e))?;
    Ok((data, family))
}

// ---------------------------------------------------------------- chains

fn build_model(cfg: &RunConfig, data: &Dataset, family: Family, keys: &[KeyCondition]) -> Outcome<MomentModel> {
    match family {
        Family::Location => MomentModel::location_for(data, keys, cfg.eps0, MadScaling::NormalConsistent),
        Family::LinearRegression => MomentModel::regression_for(data, keys, cfg.eps0, &MmConfig::default()),
    }
    .map_err(|e| classify("precomputing moment statistics", e))
}

fn chain_config(cfg: &RunConfig, method: Method, seed: u64) -> ChainConfig {
    ChainConfig {
        method,
        n_burnin: cfg.chain.burnin,
        n_keep: cfg.chain.keep,
        thin: cfg.chain.thin,
        rw_scale: None,
        tau: cfg.chain.tau,
        c: cfg.chain.c,
        adapt: cfg.chain.adapt,
        seed,
        init_theta: None,
        keep_indicator_draws: cfg.chain.keep_indicator_draws,
    }
}

struct Job {
    label: String,
    method: Method,
    keys: Vec<KeyCondition>,
    seed: u64,
}

struct Fitted {
    label: String,
    method: Method,
    keys: Vec<KeyCondition>,
    output: ChainOutput,
    summary: SummaryDocument,
}

fn run_job(cfg: &RunConfig, data: &Dataset, family: Family, job: &Job) -> Outcome<Fitted> {
    let keys: &[KeyCondition] = match job.method {
        Method::Betel => &[],
        Method::Rbetel => &job.keys,
    };
    let model = build_model(cfg, data, family, keys)?;
    let p = model.theta_dim();
    let priors = Priors {
        theta_mean: vec![cfg.prior.theta_mean; p],
        theta_var: vec![cfg.prior.theta_var; p],
        alpha0: cfg.prior.alpha0,
        beta0: cfg.prior.beta0,
    };
    let chain = chain_config(cfg, job.method, job.seed);
    let output = rbetel::run_chain(&model, &priors, data, &chain)
        .map_err(|e| classify(&format!("running {} chain", job.label), e))?;
    let parameters = summarize_draws(&output.theta_draws, output.p, &output.parameter_names, cfg.level)
        .map_err(|e| classify("summarizing draws", e))?;
    let inclusion = output
        .inclusion_probabilities()
        .into_iter()
        .enumerate()
        .map(|(index, prob)| Inclusion { index, prob })
        .collect();
    let summary = SummaryDocument {
        method: job.method.label().to_string(),
        parameters,
        inclusion,
        acceptance: output.acceptance,
        seed: job.seed,
        config_hash: cfg.hash(),
    };
    Ok(Fitted {
        label: job.label.clone(),
        method: job.method,
        keys: keys.to_vec(),
        output,
        summary,
    })
}

fn run_jobs(cfg: &RunConfig, ctx: &Context, data: &Dataset, family: Family, jobs: &[Job]) -> Outcome<Vec<Fitted>> {
    let exec = ctx.execution();
    with_workers(ctx.workers, || {
        map_slice(jobs, exec, |_, job| run_job(cfg, data, family, job))
    })
    .into_iter()
    .collect()
}

fn write_densities(dir: &Path, names: &[String], columns: &[Vec<f64>]) -> Outcome {
    for (name, col) in names.iter().zip(columns) {
        let grid = density_grid(col, DEFAULT_GRID_POINTS, Bandwidth::Silverman)
            .map_err(|e| classify("density grid", e))?;
        grid.write_csv(&dir.join(format!("density_{name}.csv")), name)
            .map_err(io_stage("writing density grid"))?;
    }
    Ok(())
}

fn write_fitted(dir: &Path, f: &Fitted) -> Outcome {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime)?;
    f.summary
        .write(&dir.join("summary.json"))
        .map_err(io_stage("writing summary.json"))?;
    write_draws_csv(&f.output, &dir.join("draws.csv")).map_err(io_stage("writing draws.csv"))?;
    write_inclusion_csv(&f.output.inclusion_probabilities(), &dir.join("inclusion.csv"))
        .map_err(io_stage("writing inclusion.csv"))?;
    if let Some(m) = &f.output.indicator_draws {
        let mut w = csv::Writer::from_path(dir.join("indicators.csv")).map_err(runtime)?;
        for r in 0..m.rows() {
            w.write_record(m.row(r).iter().map(|b| b.to_string())).map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
    }
    let columns: Vec<Vec<f64>> = (0..f.output.p).map(|j| f.output.theta_column(j)).collect();
    write_densities(dir, &f.output.parameter_names, &columns)
}

fn format_table(title: &str, params: &[ParameterSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(
        s,
        "  {:<10} {:>10} {:>22} {:>10} {:>10}",
        "Parameter", "Post.Mean", "95% C.I.", "Post.SD", "TS.SE"
    );
    for p in params {
        let _ = writeln!(
            s,
            "  {:<10} {:>10.4} {:>22} {:>10.4} {:>10.4}",
            p.name,
            p.post_mean,
            format!("({:.4}, {:.4})", p.ci_low, p.ci_high),
            p.post_sd,
            p.ts_se
        );
    }
    s
}

// ---------------------------------------------------------------- commands

pub fn fit(cfg: &RunConfig, ctx: &Context) -> Outcome {
    let (data, family) = load_dataset(cfg)?;
    let keys = cfg.key_conditions(family).map_err(input)?;
    prepare_out(ctx, cfg)?;
    let jobs: Vec<Job> = cfg
        .method
        .methods()
        .into_iter()
        .map(|m| Job {
            label: m.label().to_string(),
            method: m,
            keys: keys.clone(),
            seed: derive_seed(cfg.seed, 0, method_stream(m)),
        })
        .collect();
    let fitted = run_jobs(cfg, ctx, &data, family, &jobs)?;
    let single = fitted.len() == 1;
    for f in &fitted {
        let dir = if single { ctx.out.clone() } else { ctx.out.join(&f.label) };
        write_fitted(&dir, f)?;
        print!("{}", format_table(&f.label.to_uppercase(), &f.summary.parameters));
        if f.method == Method::Rbetel {
            let probs = f.output.inclusion_probabilities();
            let mut low: Vec<(usize, f64)> = probs.iter().copied().enumerate().filter(|p| p.1 < 0.5).collect();
            low.sort_by(|a, b| a.1.total_cmp(&b.1));
            println!("  observations with Pr(s_i = 1) < 0.5: {low:?}");
            if let Some(v) = mean(&f.output.v_draws) {
                println!("  v posterior mean {v:.4}; theta acceptance {:.3}", f.output.acceptance.theta);
            }
        }
    }
    Ok(())
}

fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

/// Every non-empty subset of the three keys, in the order C1, C2, C3, C1&C2,
/// C1&C3, C2&C3, all.
fn all_key_sets() -> Vec<String> {
    ["c1", "c2", "c3", "c1,c2", "c1,c3", "c2,c3", "c1,c2,c3"]
        .map(String::from)
        .to_vec()
}

fn key_label(keys: &[KeyCondition]) -> String {
    if keys.is_empty() {
        return "none".into();
    }
    keys.iter()
        .map(|k| match k {
            KeyCondition::ThirdMoment => "c1",
            KeyCondition::Huber => "c2",
            KeyCondition::MadScale | KeyCondition::RobustScale => "c3",
        })
        .collect::<Vec<_>>()
        .join("+")
}

fn simulation_design(cfg: &RunConfig) -> Outcome<Design> {
    let s = &cfg.simulate;
    let design = match s.design.as_str() {
        "sim41" | "location" => Design::Location(LocationDesign {
            n: s.n,
            mu0: s.mu0,
            xi0: s.xi0,
            p_out: s.p_out,
        }),
        "regression" => Design::Regression(RegressionDesign {
            n: s.n,
            delta0_star: 2.0,
            delta1_star: 1.0,
            v_star: s.v_star,
            x_variance: 5.0,
            inflation: 3.0,
            leverage_shift: s.leverage_shift,
            n_leverage: 3,
        }),
        other => {
            return Err(input(anyhow!(
                "unknown design '{other}' (expected sim41, location or regression)"
            )))
        }
    };
    match &design {
        Design::Location(d) => d.validate(),
        Design::Regression(d) => d.validate(),
    }
    .map_err(|e| classify("checking design", e))?;
    Ok(design)
}

pub fn simulate(cfg: &RunConfig, ctx: &Context) -> Outcome {
    let design = simulation_design(cfg)?;
    let family = match design {
        Design::Location(_) => Family::Location,
        Design::Regression(_) => Family::LinearRegression,
    };
    let sets: Vec<String> = if cfg.simulate.key_sets.iter().any(|s| s.eq_ignore_ascii_case("all")) {
        all_key_sets()
    } else {
        cfg.simulate.key_sets.clone()
    };
    let key_sets = sets
        .iter()
        .map(|s| crate::config::parse_key_list(s, family))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(input)?;
    prepare_out(ctx, cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, DATA_STREAM));
    let (data, flags) = design.generate(&mut rng).map_err(|e| classify("generating data", e))?;
    write_generated(&ctx.out.join("data.csv"), &data, &flags)?;

    let mut jobs = Vec::new();
    for m in cfg.method.methods() {
        match m {
            Method::Betel => jobs.push(Job {
                label: "betel".into(),
                method: m,
                keys: Vec::new(),
                seed: derive_seed(cfg.seed, 0, method_stream(m)),
            }),
            Method::Rbetel => {
                for (i, keys) in key_sets.iter().enumerate() {
                    jobs.push(Job {
                        label: format!("rbetel_{}", key_label(keys)),
                        method: m,
                        keys: keys.clone(),
                        seed: derive_seed(cfg.seed, i as u64 + 1, method_stream(m)),
                    });
                }
            }
        }
    }
    let fitted = run_jobs(cfg, ctx, &data, family, &jobs)?;

    let mut w = csv::Writer::from_path(ctx.out.join("simulate_summary.csv")).map_err(runtime)?;
    w.write_record([
        "run", "method", "keys", "parameter", "post_mean", "post_sd", "ts_se", "ci_low", "ci_high",
        "v_mean", "outlier_inclusion_mean", "good_inclusion_min",
    ])
    .map_err(runtime)?;
    for f in &fitted {
        write_fitted(&ctx.out.join(&f.label), f)?;
        let probs = f.output.inclusion_probabilities();
        let out_mean = mean(&probs.iter().zip(&flags).filter(|p| *p.1).map(|p| *p.0).collect::<Vec<_>>());
        let good_min = probs
            .iter()
            .zip(&flags)
            .filter(|p| !*p.1)
            .map(|p| *p.0)
            .fold(f64::INFINITY, f64::min);
        let v_mean = mean(&f.output.v_draws);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for p in &f.summary.parameters {
            w.write_record([
                f.label.clone(),
                f.method.label().into(),
                key_label(&f.keys),
                p.name.clone(),
                format!("{:.6}", p.post_mean),
                format!("{:.6}", p.post_sd),
                format!("{:.6}", p.ts_se),
                format!("{:.6}", p.ci_low),
                format!("{:.6}", p.ci_high),
                opt(v_mean),
                opt(out_mean),
                format!("{good_min:.6}"),
            ])
            .map_err(runtime)?;
        }
        print!("{}", format_table(&f.label, &f.summary.parameters));
        if f.method == Method::Rbetel {
            println!(
                "  v mean {}; outlier inclusion mean {}; good inclusion min {good_min:.3}",
                opt(v_mean),
                opt(out_mean)
            );
        }
    }
    w.flush().map_err(runtime)?;
    Ok(())
}

fn write_generated(path: &Path, data: &Dataset, flags: &[bool]) -> Outcome {
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    match &data.y {
        Some(y) => {
            w.write_record(["x", "y", "contaminated"]).map_err(runtime)?;
            for ((x, y), f) in data.x.iter().zip(y).zip(flags) {
                w.write_record([format!("{x:e}"), format!("{y:e}"), (*f as u8).to_string()])
                    .map_err(runtime)?;
            }
        }
        None => {
            w.write_record(["x", "contaminated"]).map_err(runtime)?;
            for (x, f) in data.x.iter().zip(flags) {
                w.write_record([format!("{x:e}"), (*f as u8).to_string()]).map_err(runtime)?;
            }
        }
    }
    w.flush().map_err(runtime)?;
    Ok(())
}

fn experiments(cfg: &RunConfig) -> Outcome<Vec<Experiment>> {
    let r = &cfg.replicate;
    let (family, grid) = match r.experiment.as_str() {
        "location" => (Family::Location, &r.sizes),
        "regression" => (Family::LinearRegression, &r.v_stars),
        other => {
            return Err(input(anyhow!(
                "unknown experiment '{other}' (expected location or regression)"
            )))
        }
    };
    if grid.is_empty() {
        return Err(input(anyhow!("empty experiment grid")));
    }
    let keys = cfg.key_conditions(family).map_err(input)?;
    grid.iter()
        .enumerate()
        .map(|(i, &g)| {
            let mut exp = match family {
                Family::Location => simlab::presets::location_grid(g),
                Family::LinearRegression => simlab::presets::regression_grid(g),
            };
            match &mut exp.design {
                Design::Location(d) => d.n = r.n,
                Design::Regression(d) => {
                    d.n = r.n;
                    d.leverage_shift = if r.clean_at_full_v && g >= 1.0 { 0.0 } else { r.leverage_shift };
                }
            }
            match &exp.design {
                Design::Location(d) => d.validate(),
                Design::Regression(d) => d.validate(),
            }
            .map_err(|e| classify("checking design", e))?;
            exp.n_reps = r.reps;
            exp.seed = derive_seed(cfg.seed, i as u64, 0x6772_6964);
            exp.methods = cfg.method.methods();
            let a = &mut exp.analysis;
            a.keys = keys.clone();
            a.epsilon0 = cfg.eps0;
            a.alpha0 = cfg.prior.alpha0;
            a.beta0 = cfg.prior.beta0;
            a.theta_prior_var = cfg.prior.theta_var;
            a.chain = chain_config(cfg, Method::Rbetel, 0);
            Ok(exp)
        })
        .collect()
}

pub fn replicate(cfg: &RunConfig, ctx: &Context) -> Outcome {
    if cfg.prior.theta_mean != 0.0 {
        return Err(input(anyhow!("replicate uses a zero prior mean for theta")));
    }
    let exps = experiments(cfg)?;
    prepare_out(ctx, cfg)?;
    let exec = ctx.execution();
    let mut outcomes = Vec::new();
    for exp in &exps {
        eprintln!("replicate: {} ({} reps)", exp.name, exp.n_reps);
        let o = with_workers(ctx.workers, || simlab::replicate(exp, exec))
            .map_err(|e| classify(&format!("replicating {}", exp.name), e))?;
        outcomes.push(o);
    }

    let mut w = csv::Writer::from_path(ctx.out.join("table.csv")).map_err(runtime)?;
    w.write_record([
        "experiment", "method", "parameter", "truth", "Av.Post.Mean", "Av.Post.SD", "Av.TS.SE",
        "P.O.C", "n_ok", "n_failed",
    ])
    .map_err(runtime)?;
    let mut per_rep = csv::Writer::from_path(ctx.out.join("replicates.csv")).map_err(runtime)?;
    per_rep
        .write_record([
            "experiment", "rep", "method", "parameter", "post_mean", "post_sd", "ts_se", "ci_low",
            "ci_high", "theta_acceptance", "error",
        ])
        .map_err(runtime)?;
    println!(
        "{:<18} {:<7} {:<8} {:>12} {:>11} {:>10} {:>6}",
        "experiment", "method", "param", "Av.Post.Mean", "Av.Post.SD", "Av.TS.SE", "P.O.C"
    );
    for o in &outcomes {
        for r in &o.reports {
            for p in &r.parameters {
                w.write_record([
                    o.experiment.clone(),
                    r.method.label().into(),
                    p.name.clone(),
                    format!("{}", p.truth),
                    format!("{:.6}", p.av_post_mean),
                    format!("{:.6}", p.av_post_sd),
                    format!("{:.6}", p.av_ts_se),
                    format!("{:.4}", p.poc),
                    r.n_ok.to_string(),
                    r.n_failed.to_string(),
                ])
                .map_err(runtime)?;
                println!(
                    "{:<18} {:<7} {:<8} {:>12.4} {:>11.4} {:>10.4} {:>6.2}",
                    o.experiment,
                    r.method.label(),
                    p.name,
                    p.av_post_mean,
                    p.av_post_sd,
                    p.av_ts_se,
                    p.poc
                );
            }
        }
        for rec in &o.records {
            match &rec.result {
                Some(res) => {
                    for p in &res.parameters {
                        per_rep
                            .write_record([
                                o.experiment.clone(),
                                rec.rep.to_string(),
                                rec.method.label().into(),
                                p.name.clone(),
                                format!("{:e}", p.post_mean),
                                format!("{:e}", p.post_sd),
                                format!("{:e}", p.ts_se),
                                format!("{:e}", p.ci_low),
                                format!("{:e}", p.ci_high),
                                format!("{:.6}", res.theta_acceptance),
                                String::new(),
                            ])
                            .map_err(runtime)?;
                    }
                }
                None => per_rep
                    .write_record([
                        o.experiment.clone(),
                        rec.rep.to_string(),
                        rec.method.label().into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        rec.error.clone().unwrap_or_default(),
                    ])
                    .map_err(runtime)?,
            }
        }
    }
    w.flush().map_err(runtime)?;
    per_rep.flush().map_err(runtime)?;
    let reports: Vec<_> = outcomes
        .iter()
        .map(|o| serde_json::json!({ "experiment": o.experiment, "reports": o.reports }))
        .collect();
    write_json(&ctx.out.join("table.json"), &reports)
}

pub fn summarize(cfg: &RunConfig, ctx: &Context) -> Outcome {
    let path = cfg
        .summarize
        .draws
        .as_ref()
        .ok_or_else(|| input(anyhow!("summarize needs --draws PATH")))?;
    let (names, values) = read_draws_csv(path).map_err(|e| classify("reading draws", e))?;
    let p = names.len();
    let parameters = summarize_draws(&values, p, &names, cfg.level).map_err(|e| classify("summarizing draws", e))?;
    prepare_out(ctx, cfg)?;

    // reuse what the original run recorded next to the draws, if present
    let previous = path
        .parent()
        .map(|d| d.join("summary.json"))
        .filter(|p| p.exists())
        .and_then(|p| SummaryDocument::read(&p).ok());
    let rows = values.len() / p.max(1);
    let moved = (1..rows)
        .filter(|&r| values[r * p..(r + 1) * p] != values[(r - 1) * p..r * p])
        .count();
    let acceptance = previous.as_ref().map(|s| s.acceptance).unwrap_or(Acceptance {
        theta: moved as f64 / (rows.max(2) - 1) as f64,
        indicator: None,
    });
    let inclusion = previous.as_ref().map(|s| s.inclusion.clone()).unwrap_or_default();
    let method = previous
        .as_ref()
        .map(|s| s.method.clone())
        .unwrap_or_else(|| cfg.summarize.method.clone());
    let doc = SummaryDocument {
        method,
        parameters,
        inclusion,
        acceptance,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    doc.write(&ctx.out.join("summary.json")).map_err(io_stage("writing summary.json"))?;
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| values.iter().skip(j).step_by(p).copied().collect())
        .collect();
    write_densities(&ctx.out, &names, &columns)?;
    print!("{}", format_table(&doc.method, &doc.parameters));
    Ok(())
}
