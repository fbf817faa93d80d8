//! Synthetic careers drawn from the generative model, for tests,
//! benchmarks and parameter-recovery studies.

use crate::gp::{build_covariance, CovFactor, GpError, GpHyper};
use crate::model::{AbilityParams, Career, Innings, ModelError, MAX_SUM_TERMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("innings count must be at least 1")]
    NoInnings,
    #[error("not-out rate must lie in [0, 1), got {0}")]
    BadNotOutRate(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// How the per-innings ability evolves.
#[derive(Debug, Clone, PartialEq)]
pub enum AbilitySpec {
    /// Constant hazard: geometric scores with mean `mu`.
    Constant { mu: f64 },
    /// Set average follows `exp` of a GP path with mean `ln m`,
    /// amplitude `sigma` and correlation length `ell`; within each
    /// innings the batter starts at `c·μ2` and settles over `d·μ2` runs.
    GpPath { c: f64, d: f64, m: f64, sigma: f64, ell: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub ability: AbilitySpec,
    pub innings: usize,
    /// Probability that an innings is recorded as a not-out, censored
    /// uniformly below the latent dismissal score.
    pub not_out_rate: f64,
}

/// A simulated career together with its generating truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedCareer {
    pub career: Career,
    pub mu2_path: Vec<f64>,
    pub params: Vec<AbilityParams>,
}

/// Simulate one career. Reproducible from the seed; the GP path (if
/// any) consumes the stream first, then each innings draws its score
/// uniform, its censoring uniform, and, for not-outs only, the
/// censoring fraction.
pub fn simulate_career(
    spec: &SimSpec,
    player_id: &str,
    seed: u64,
) -> Result<SimulatedCareer, SimError> {
    if spec.innings == 0 {
        return Err(SimError::NoInnings);
    }
    if !(spec.not_out_rate >= 0.0 && spec.not_out_rate < 1.0) {
        return Err(SimError::BadNotOutRate(spec.not_out_rate));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let (mu2_path, params) = match &spec.ability {
        AbilitySpec::Constant { mu } => {
            let p = AbilityParams::constant(*mu)?;
            (vec![*mu; spec.innings], vec![p; spec.innings])
        }
        AbilitySpec::GpPath { c, d, m, sigma, ell } => {
            let hyper = GpHyper::new(*m, *sigma, *ell)?;
            let mu2: Vec<f64> = if *sigma == 0.0 {
                vec![*m; spec.innings]
            } else {
                let t: Vec<f64> = (1..=spec.innings).map(|v| v as f64).collect();
                let factor = CovFactor::new(build_covariance(&t, &hyper), *sigma)?;
                let z: Vec<f64> =
                    (0..spec.innings).map(|_| rng.sample(StandardNormal)).collect();
                let log_m = m.ln();
                factor.colour(&z).iter().map(|v| (log_m + v).exp()).collect()
            };
            let params = mu2
                .iter()
                .map(|&m2| AbilityParams::from_reparam(*c, *d, m2))
                .collect::<Result<Vec<_>, _>>()?;
            (mu2, params)
        }
    };

    let mut innings = Vec::with_capacity(spec.innings);
    for p in &params {
        let score = draw_score(&mut rng, p);
        let not_out = spec.not_out_rate > 0.0 && rng.gen::<f64>() < spec.not_out_rate;
        if not_out {
            let frac: f64 = rng.gen();
            let y = ((f64::from(score) + 1.0) * frac).floor() as u32;
            innings.push(Innings::not_out(y.min(score)));
        } else {
            innings.push(Innings::out(score));
        }
    }
    let career = Career::new(player_id, innings)?;
    Ok(SimulatedCareer { career, mu2_path, params })
}

/// Inverse-CDF walk: the smallest `x` with `S(x+1) ≤ v` for a single
/// uniform `v` is distributed as the score distribution.
fn draw_score(rng: &mut ChaCha12Rng, p: &AbilityParams) -> u32 {
    let v = 1.0 - rng.gen::<f64>();
    let delta = p.mu1 - p.mu2;
    let decay = (-1.0 / p.big_l).exp();
    let mut trans = 1.0;
    let mut surv = 1.0;
    let mut x = 0u32;
    loop {
        let mu = p.mu2 + delta * trans;
        surv *= mu / (mu + 1.0);
        if surv <= v || u64::from(x) >= MAX_SUM_TERMS {
            return x;
        }
        x += 1;
        trans *= decay;
    }
}
