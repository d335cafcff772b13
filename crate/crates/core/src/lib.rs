//! Bayesian exponentially tilted empirical likelihood (BETEL) and its
//! outlier-robust variant (RBETEL) for moment condition models.
//!
//! * [`etel`]: the exponential tilting solve, implied weights and EL ratios.
//! * [`moments`]: moment functions for location and simple linear regression,
//!   with optional key conditions that separate good data from outliers.
//! * [`robust`]: OLS and MM regression baselines; the MM S-scale feeds the
//!   regression scale key.
//! * [`sampler`]: the MCMC over `(θ, s, v)` (or `θ` alone for BETEL).
//! * [`posterior`]: summaries, inclusion probabilities and density grids.
//! * [`simlab`]: simulation designs and replication studies.
//!
//! ```
//! use rbetel::moments::{Dataset, KeyCondition, MadScaling, MomentModel};
//! use rbetel::sampler::{run_chain, ChainConfig, Priors};
//!
//! let data = Dataset::location(vec![0.9, 1.2, 0.7, 1.1, 1.0, 0.8, 1.3, 6.0]).unwrap();
//! let keys = [KeyCondition::ThirdMoment, KeyCondition::MadScale];
//! let model = MomentModel::location_for(&data, &keys, 1.5, MadScaling::NormalConsistent).unwrap();
//! let priors = Priors::flat(1, 50.0, 5.0);
//! let cfg = ChainConfig { n_burnin: 200, n_keep: 200, ..ChainConfig::default() };
//! let out = run_chain(&model, &priors, &data, &cfg).unwrap();
//! assert_eq!(out.n_draws(), 200);
//! ```

pub mod error;
pub mod etel;
pub mod moments;
pub mod parallel;
pub mod posterior;
pub mod robust;
pub mod sampler;
pub mod simlab;

pub use error::{Error, Result};
pub use etel::{solve_tilting, GMatrix, SolverOptions, TiltingSolution};
pub use moments::{Dataset, Family, KeyCondition, MomentFunction, MomentModel};
pub use parallel::Execution;
pub use sampler::{run_chain, ChainConfig, ChainOutput, IndicatorState, Method, Priors};
