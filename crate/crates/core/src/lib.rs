//! Bayesian modelling of a batter's career: innings scores follow a
//! discrete hazard model whose set average drifts between innings
//! under a Gaussian-process prior, fitted by nested sampling over the
//! unit cube, with posterior expected-score trajectories, forecasts
//! for future innings, and head-to-head comparisons on top.
//!
//! The pipeline in one sitting:
//!
//! ```
//! use crease::model::Career;
//! use crease::sampler::{posterior_resample, NsConfig};
//! use crease::simulate::{simulate_career, AbilitySpec, SimSpec};
//! use crease::{fit, predict};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! // A short synthetic career with a steady true ability of 30.
//! let spec = SimSpec {
//!     ability: AbilitySpec::Constant { mu: 30.0 },
//!     innings: 6,
//!     not_out_rate: 0.1,
//! };
//! let truth = simulate_career(&spec, "example", 7)?;
//!
//! // Fit it (tiny sampler settings keep the example quick).
//! let cfg = NsConfig { n_particles: 60, mcmc_steps: 25, ..NsConfig::default() };
//! let result = fit::fit_career(&truth.career, &cfg)?;
//! assert!(result.log_z.is_finite());
//!
//! // Summarise the ability trajectory and forecast the next innings.
//! let draws = posterior_resample(&result, 50, 1)?;
//! let decoded = predict::decode_draws(&draws, truth.career.len())?;
//! let curve = predict::nu_curve(&decoded, 0.68, false)?;
//! assert_eq!(curve.t.len(), 6);
//! let forecast = predict::extrapolate(&decoded, 3, 0.68, 2)?;
//! assert!(forecast.next_innings_nu() > 0.0);
//! # Ok(())
//! # }
//! ```
//!
//! Every stage is deterministic given its seed, whether or not the
//! `parallel` feature (on by default) spreads the work across a
//! thread pool.

pub mod exec;
pub mod fit;
pub mod gp;
pub mod io;
pub mod math;
pub mod model;
pub mod predict;
pub mod sampler;
pub mod simulate;

pub use fit::{fit_career, fit_career_with_progress, CareerModel};
pub use model::{AbilityParams, Career, CareerParams, Innings, ModelError};
pub use sampler::{posterior_resample, NsConfig, NsResult, SamplerError};
