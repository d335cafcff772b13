//! `rbetel`: fit BETEL / RBETEL posteriors, run the simulation designs and
//! summarize draws.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 runtime or chain
//! failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FamilyChoice, LogBase, MethodChoice, RunConfig};

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "rbetel-out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodChoice>,
    #[arg(long, global = true)]
    burnin: Option<usize>,
    #[arg(long, global = true)]
    keep: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    alpha0: Option<f64>,
    #[arg(long, global = true)]
    beta0: Option<f64>,
    #[arg(long, global = true)]
    eps0: Option<f64>,
    /// Key conditions, e.g. `c1,c2,c3` or `third_moment,huber`.
    #[arg(long, global = true)]
    keys: Option<String>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a CSV dataset (defaults to the bundled brain/body data).
    Fit {
        /// CSV file with a header row.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Regressor (or location variable) column.
        #[arg(long)]
        x: Option<String>,
        /// Response column; `none` fits a location model on `x`.
        #[arg(long)]
        y: Option<String>,
        #[arg(long, value_enum)]
        family: Option<FamilyChoice>,
        /// Transform applied to the data columns.
        #[arg(long, value_enum)]
        log: Option<LogBase>,
    },
    /// Generate one dataset from a named design and fit it.
    Simulate {
        /// `sim41`, `location` or `regression`.
        #[arg(long)]
        design: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        xi0: Option<f64>,
        #[arg(long)]
        v_star: Option<f64>,
        /// Semicolon-separated key sets, e.g. `c1;c1,c3`, or `all`.
        #[arg(long)]
        key_sets: Option<String>,
    },
    /// Replication study over an experiment grid.
    Replicate {
        /// `location` or `regression`.
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated grid: outlier means or v* values.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Re-summarize an existing draws.csv.
    Summarize {
        #[arg(long)]
        draws: Option<PathBuf>,
    },
}

#[derive(Parser)]
#[command(name = "rbetel", version, about = "Robust Bayesian exponentially tilted empirical likelihood")]
struct Root {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// How a run failed, which decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Runtime(e) => e,
        }
    }
}

fn parse_grid(list: &str) -> anyhow::Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("grid value {s:?} is not a number"))
        })
        .collect()
}

fn resolve(common: &Common, command: &Command) -> anyhow::Result<RunConfig> {
    let name = match command {
        Command::Fit { .. } => "fit",
        Command::Simulate { .. } => "simulate",
        Command::Replicate { .. } => "replicate",
        Command::Summarize { .. } => "summarize",
    };
    let mut cfg = config::load(name, common.config.as_deref())?;
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.method {
        cfg.method = v;
    }
    if let Some(v) = common.burnin {
        cfg.chain.burnin = v;
    }
    if let Some(v) = common.keep {
        cfg.chain.keep = v;
    }
    if let Some(v) = common.thin {
        cfg.chain.thin = v;
    }
    if let Some(v) = common.tau {
        cfg.chain.tau = v;
    }
    if let Some(v) = common.alpha0 {
        cfg.prior.alpha0 = v;
    }
    if let Some(v) = common.beta0 {
        cfg.prior.beta0 = v;
    }
    if let Some(v) = common.eps0 {
        cfg.eps0 = v;
    }
    if let Some(v) = &common.keys {
        // validate eagerly so a bad name fails before any work
        config::parse_key_list(v, rbetel::Family::Location)?;
        cfg.keys = vec![v.clone()];
        if name == "simulate" {
            cfg.simulate.key_sets = vec![v.clone()];
        }
    }
    match command {
        Command::Fit { data, x, y, family, log } => {
            if let Some(p) = data {
                cfg.data.path = Some(p.clone());
            }
            if let Some(v) = x {
                cfg.data.x = v.clone();
            }
            if let Some(v) = y {
                cfg.data.y = (!v.eq_ignore_ascii_case("none")).then(|| v.clone());
            }
            if let Some(v) = family {
                cfg.data.family = *v;
            }
            if let Some(v) = log {
                cfg.data.log = *v;
            }
            if cfg.data.log == LogBase::Auto {
                cfg.data.log = if cfg.data.path.is_none() { LogBase::Ln } else { LogBase::None };
            }
        }
        Command::Simulate { design, n, xi0, v_star, key_sets } => {
            if let Some(v) = design {
                cfg.simulate.design = v.clone();
            }
            if let Some(v) = n {
                cfg.simulate.n = *v;
            }
            if let Some(v) = xi0 {
                cfg.simulate.xi0 = *v;
            }
            if let Some(v) = v_star {
                cfg.simulate.v_star = *v;
            }
            if let Some(v) = key_sets {
                cfg.simulate.key_sets = v.split(';').map(|s| s.trim().to_string()).collect();
            }
        }
        Command::Replicate { experiment, reps, n, grid } => {
            if let Some(v) = experiment {
                cfg.replicate.experiment = v.clone();
            }
            if let Some(v) = reps {
                cfg.replicate.reps = *v;
            }
            if let Some(v) = n {
                cfg.replicate.n = *v;
            }
            if let Some(g) = grid {
                let values = parse_grid(g)?;
                if cfg.replicate.experiment == "regression" {
                    cfg.replicate.v_stars = values;
                } else {
                    cfg.replicate.sizes = values;
                }
            }
        }
        Command::Summarize { draws } => {
            if let Some(p) = draws {
                cfg.summarize.draws = Some(p.clone());
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let root = Root::parse();
    let cfg = match resolve(&root.common, &root.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: configuration: {e:#}");
            return ExitCode::from(2);
        }
    };
    let ctx = run::Context {
        out: root.common.out.clone(),
        workers: root.common.workers.max(1),
    };
    let result = match &root.command {
        Command::Fit { .. } => run::fit(&cfg, &ctx),
        Command::Simulate { .. } => run::simulate(&cfg, &ctx),
        Command::Replicate { .. } => run::replicate(&cfg, &ctx),
        Command::Summarize { .. } => run::summarize(&cfg, &ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
