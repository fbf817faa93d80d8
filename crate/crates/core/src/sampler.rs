//! Nested sampling over the unit cube.
//!
//! The engine maintains `n_particles` live points drawn from the
//! uniform prior on `[0,1]^dim`. Each iteration discards the worst
//! (lowest log-likelihood) particle, credits it with the prior-mass
//! sliver it occupied under the deterministic shrinkage schedule
//! `ln X_k = −k / n_particles`, and replaces it with a clone of a
//! random survivor evolved by a likelihood-constrained random walk.
//! Evidence accumulates as `Z = Σ L_k · (X_{k−1} − X_k)`; the sliver
//! widths telescope, so together with the final live-point mass the
//! weights account for exactly the whole prior.
//!
//! Runs are bit-reproducible from the seed: the replacement walk is
//! sequential, and the only parallel section (initial population
//! evaluation) collects results by particle index.

use crate::exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{log_add_exp, log_sub_exp};

/// Robbins–Monro acceptance target for the constrained walk.
pub const ACCEPT_TARGET: f64 = 0.35;
/// Robbins–Monro gain per MCMC step.
const ADAPT_GAIN: f64 = 0.05;
/// Bounds on the adapted proposal scale.
const STEP_SCALE_MIN: f64 = 1e-9;
const STEP_SCALE_MAX: f64 = 0.5;
/// Expected number of coordinates perturbed per proposal.
const PROPOSAL_COORDS: f64 = 10.0;
/// Consecutive fully-rejected replacements tolerated before aborting.
const STALL_LIMIT: u32 = 10;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("log-likelihood returned a non-finite value ({value}); the sampler requires finite log-likelihoods everywhere on the cube")]
    NonFiniteLogLikelihood { value: f64 },
    #[error("exploration stalled at iteration {iteration}: {STALL_LIMIT} consecutive replacements rejected every proposal below threshold {threshold}; likelihood plateau or step-size pathology")]
    StalledExploration { iteration: u64, threshold: f64 },
    #[error("posterior weights are degenerate (effective sample size {ess:.2} < 2)")]
    DegenerateWeights { ess: f64 },
    #[error("requested {requested} posterior draws; at least 1 required")]
    BadDrawCount { requested: usize },
}

/// A log-likelihood evaluator over the unit cube.
///
/// Implementations must be total and finite: every point of
/// `[0,1]^dim` gets a finite value. `Sync` so the initial population
/// can be evaluated in parallel.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn log_likelihood(&self, u: &[f64]) -> f64;
}

/// Prior-mass shrinkage schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shrinkage {
    /// `ln X_k = −k/n`: reproducible weights, the default.
    #[default]
    Deterministic,
    /// Draw each compression factor from Beta(n, 1).
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsConfig {
    pub n_particles: usize,
    pub mcmc_steps: usize,
    pub termination_frac: f64,
    pub seed: u64,
    pub step_scale: f64,
    pub shrinkage: Shrinkage,
}

impl Default for NsConfig {
    fn default() -> Self {
        NsConfig {
            n_particles: 1000,
            mcmc_steps: 1000,
            termination_frac: 1e-6,
            seed: 42,
            step_scale: 0.02,
            shrinkage: Shrinkage::Deterministic,
        }
    }
}

impl NsConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_particles < 2 {
            return Err(SamplerError::InvalidConfig(format!(
                "n_particles must be at least 2, got {}",
                self.n_particles
            )));
        }
        if self.mcmc_steps == 0 {
            return Err(SamplerError::InvalidConfig("mcmc_steps must be at least 1".into()));
        }
        if !(self.termination_frac > 0.0 && self.termination_frac <= 0.01) {
            return Err(SamplerError::InvalidConfig(format!(
                "termination_frac must lie in (0, 0.01], got {}",
                self.termination_frac
            )));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= STEP_SCALE_MAX) {
            return Err(SamplerError::InvalidConfig(format!(
                "step_scale must lie in (0, {STEP_SCALE_MAX}], got {}",
                self.step_scale
            )));
        }
        Ok(())
    }
}

/// A live point: a cube position and its log-likelihood.
#[derive(Debug, Clone)]
pub struct Particle {
    pub u: Vec<f64>,
    pub log_like: f64,
}

/// One weighted posterior sample out of a finished run.
/// `log_weight` values are normalised: `Σ exp(log_weight) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsSample {
    pub u: Vec<f64>,
    pub log_like: f64,
    pub log_weight: f64,
}

/// Per-run exploration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Accepted fraction of each replacement's MCMC steps.
    pub acceptance_rates: Vec<f64>,
    /// Final adapted proposal scale.
    pub final_step_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsResult {
    pub log_z: f64,
    pub log_z_err: f64,
    /// Information `H = E_post[ln L] − ln Z` in nats.
    pub information: f64,
    pub n_iterations: u64,
    pub samples: Vec<NsSample>,
    pub diagnostics: Diagnostics,
}

impl NsResult {
    /// Effective sample size of the normalised weights.
    pub fn ess(&self) -> f64 {
        let sum_sq: f64 = self.samples.iter().map(|s| (2.0 * s.log_weight).exp()).sum();
        1.0 / sum_sq
    }
}

/// Progress record emitted once per iteration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Progress {
    pub iteration: u64,
    pub log_x: f64,
    pub log_z: f64,
    pub worst_log_like: f64,
    pub acceptance: f64,
}

/// Run nested sampling. See [`run_with_progress`].
pub fn run<T: Target + ?Sized>(target: &T, cfg: &NsConfig) -> Result<NsResult, SamplerError> {
    run_with_progress(target, cfg, |_| {})
}

/// Run nested sampling, invoking `on_progress` after every iteration.
pub fn run_with_progress<T, F>(
    target: &T,
    cfg: &NsConfig,
    mut on_progress: F,
) -> Result<NsResult, SamplerError>
where
    T: Target + ?Sized,
    F: FnMut(&Progress),
{
    cfg.validate()?;
    let dim = target.dim();
    if dim == 0 {
        return Err(SamplerError::InvalidConfig("target dimension must be positive".into()));
    }
    let n = cfg.n_particles;
    let nf = n as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    // Draw every starting position from the main stream first, then
    // evaluate: the evaluation map is order-invariant, so parallel and
    // sequential initialisation agree bitwise.
    let positions: Vec<Vec<f64>> =
        (0..n).map(|_| (0..dim).map(|_| open_unit(&mut rng)).collect()).collect();
    let log_likes = exec::map_indexed(&positions, |u| target.log_likelihood(u));
    let mut live: Vec<Particle> = positions
        .into_iter()
        .zip(log_likes)
        .map(|(u, log_like)| {
            if !log_like.is_finite() {
                return Err(SamplerError::NonFiniteLogLikelihood { value: log_like });
            }
            Ok(Particle { u, log_like })
        })
        .collect::<Result<_, _>>()?;

    let coord_prob = (PROPOSAL_COORDS / dim as f64).min(1.0);
    let mut step_scale = cfg.step_scale;
    let mut dead: Vec<(Vec<f64>, f64, f64)> = Vec::new(); // (u, ln L, raw ln w·L)
    let mut log_z = f64::NEG_INFINITY;
    let mut post_mean_log_like = 0.0; // running E_post[ln L]
    let mut log_x_prev = 0.0;
    let mut acceptance_rates = Vec::new();
    let mut stall_streak = 0u32;
    let mut iteration = 0u64;

    loop {
        iteration += 1;

        let (worst_idx, worst_ll) = live
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.log_like))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite log-likelihoods"))
            .expect("live set is non-empty");

        let log_x = match cfg.shrinkage {
            Shrinkage::Deterministic => -(iteration as f64) / nf,
            Shrinkage::Stochastic => log_x_prev + open_unit(&mut rng).ln() / nf,
        };
        // Mass sliver (X_{k−1} − X_k); slivers plus the final live mass
        // partition the whole prior, so Σ weights = 1 exactly.
        let log_w = log_sub_exp(log_x_prev, log_x);
        let contrib = worst_ll + log_w;
        let log_z_new = log_add_exp(log_z, contrib);
        post_mean_log_like = (contrib - log_z_new).exp() * worst_ll
            + if log_z.is_finite() { (log_z - log_z_new).exp() * post_mean_log_like } else { 0.0 };
        log_z = log_z_new;
        dead.push((live[worst_idx].u.clone(), worst_ll, contrib));

        // Clone a random survivor and evolve it inside the constraint.
        let src = {
            let j = rng.gen_range(0..n - 1);
            if j >= worst_idx {
                j + 1
            } else {
                j
            }
        };
        let mut cur = live[src].clone();
        let mut accepted = 0u32;
        let mut any_strict_reject = false;
        let mut proposal = vec![0.0; dim];
        for _ in 0..cfg.mcmc_steps {
            proposal.copy_from_slice(&cur.u);
            let mut changed = false;
            for value in proposal.iter_mut() {
                if rng.gen::<f64>() < coord_prob {
                    let step: f64 = rng.sample(StandardNormal);
                    *value = reflect_unit(*value + step_scale * step);
                    changed = true;
                }
            }
            if !changed {
                let i = rng.gen_range(0..dim);
                let step: f64 = rng.sample(StandardNormal);
                proposal[i] = reflect_unit(proposal[i] + step_scale * step);
            }
            let prop_ll = target.log_likelihood(&proposal);
            if !prop_ll.is_finite() {
                return Err(SamplerError::NonFiniteLogLikelihood { value: prop_ll });
            }
            // The prior is uniform and the reflected proposal is
            // symmetric, so Metropolis acceptance reduces to the hard
            // likelihood constraint.
            let accept = prop_ll > worst_ll;
            if accept {
                debug_assert!(prop_ll > worst_ll);
                std::mem::swap(&mut cur.u, &mut proposal);
                cur.log_like = prop_ll;
                accepted += 1;
            } else if prop_ll < worst_ll {
                any_strict_reject = true;
            }
            let alpha = if accept { 1.0 } else { 0.0 };
            step_scale = (step_scale * (ADAPT_GAIN * (alpha - ACCEPT_TARGET)).exp())
                .clamp(STEP_SCALE_MIN, STEP_SCALE_MAX);
        }
        let acc_rate = f64::from(accepted) / cfg.mcmc_steps as f64;
        acceptance_rates.push(acc_rate);
        // A replacement that rejected everything while seeing only
        // exact likelihood ties is exploring a plateau, which the
        // weight schedule handles; only strict rejections indicate a
        // stalled walk.
        if accepted == 0 && any_strict_reject {
            stall_streak += 1;
            if stall_streak >= STALL_LIMIT {
                return Err(SamplerError::StalledExploration { iteration, threshold: worst_ll });
            }
        } else {
            stall_streak = 0;
        }
        live[worst_idx] = cur;
        log_x_prev = log_x;

        let max_live_ll = live
            .iter()
            .map(|p| p.log_like)
            .fold(f64::NEG_INFINITY, f64::max);
        on_progress(&Progress {
            iteration,
            log_x,
            log_z,
            worst_log_like: worst_ll,
            acceptance: acc_rate,
        });
        if max_live_ll + log_x < cfg.termination_frac.ln() + log_z {
            break;
        }
    }

    // Distribute the remaining prior mass over the live points,
    // lowest likelihood first so the discard sequence stays sorted.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        live[a]
            .log_like
            .partial_cmp(&live[b].log_like)
            .expect("finite log-likelihoods")
            .then(a.cmp(&b))
    });
    let log_w_live = log_x_prev - nf.ln();
    for idx in order {
        let p = &live[idx];
        let contrib = p.log_like + log_w_live;
        let log_z_new = log_add_exp(log_z, contrib);
        post_mean_log_like = (contrib - log_z_new).exp() * p.log_like
            + if log_z.is_finite() { (log_z - log_z_new).exp() * post_mean_log_like } else { 0.0 };
        log_z = log_z_new;
        dead.push((p.u.clone(), p.log_like, contrib));
    }

    let information = (post_mean_log_like - log_z).max(0.0);
    let samples = dead
        .into_iter()
        .map(|(u, log_like, raw)| NsSample { u, log_like, log_weight: raw - log_z })
        .collect();
    Ok(NsResult {
        log_z,
        log_z_err: (information / nf).sqrt(),
        information,
        n_iterations: iteration,
        samples,
        diagnostics: Diagnostics { acceptance_rates, final_step_scale: step_scale },
    })
}

/// Systematic resampling of the weighted run into `n_draws`
/// equally-weighted cube positions. With uniform weights this selects
/// a stratified subset; a run whose weights concentrate on fewer than
/// two effective samples is rejected as degenerate.
pub fn posterior_resample(
    result: &NsResult,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SamplerError> {
    if n_draws == 0 {
        return Err(SamplerError::BadDrawCount { requested: n_draws });
    }
    let ess = result.ess();
    if !(ess >= 2.0) {
        return Err(SamplerError::DegenerateWeights { ess });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let offset: f64 = rng.gen::<f64>() / n_draws as f64;
    let mut draws = Vec::with_capacity(n_draws);
    let mut cum = 0.0;
    let mut idx = 0usize;
    for j in 0..n_draws {
        let pos = offset + j as f64 / n_draws as f64;
        while idx < result.samples.len() - 1 && cum + result.samples[idx].log_weight.exp() < pos {
            cum += result.samples[idx].log_weight.exp();
            idx += 1;
        }
        draws.push(result.samples[idx].u.clone());
    }
    Ok(draws)
}

fn open_unit(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let v = rng.gen::<f64>();
        if v > 0.0 {
            return v;
        }
    }
}

/// Fold a proposed coordinate back into the unit interval by
/// reflection, then nudge off the exact boundary so downstream
/// quantile transforms stay finite.
fn reflect_unit(mut x: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return x.clamp(1e-12, 1.0 - 1e-12);
        }
    }
}
