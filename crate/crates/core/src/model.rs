//! Batting model core: a batter on score `x` is dismissed by the next
//! ball-in-anger with hazard `H(x) = 1 / (μ(x) + 1)`, where the
//! effective average
//!
//! ```text
//! μ(x) = μ2 + (μ1 − μ2) · exp(−x / L)
//! ```
//!
//! rises from `μ1` (fresh at the crease) towards `μ2` (set) on the
//! timescale `L`. Scores then follow the discrete distribution
//! `P(X = x) = H(x) · Π_{a<x} (1 − H(a))`, and a not-out innings is a
//! right-censored observation contributing the survival probability
//! `P(X ≥ x)` instead of the mass function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on summation lengths inside [`nu`](crate::predict::nu)
/// and the comparison kernels, a guard against degenerate parameter
/// corners (effective averages of millions of runs) rather than a
/// tolerance: realistic parameters hit their geometric tail bounds
/// orders of magnitude earlier.
pub const MAX_SUM_TERMS: u64 = 20_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("innings parameter {name} must be positive and finite, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("reparameterised coefficient {name} must lie strictly inside (0, 1), got {value}")]
    CoefficientOutOfRange { name: &'static str, value: f64 },
    #[error("career must contain at least one innings")]
    EmptyCareer,
    #[error("career has {innings} innings but parameters cover {params}")]
    DimensionMismatch { innings: usize, params: usize },
}

/// One innings: runs scored, and whether the batter was dismissed.
/// `dismissed: false` is a not-out (right-censored score).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Innings {
    pub score: u32,
    pub dismissed: bool,
}

impl Innings {
    pub fn out(score: u32) -> Self {
        Innings { score, dismissed: true }
    }

    pub fn not_out(score: u32) -> Self {
        Innings { score, dismissed: false }
    }
}

/// A player's innings-by-innings record, in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Career {
    player_id: String,
    innings: Vec<Innings>,
}

impl Career {
    pub fn new(player_id: impl Into<String>, innings: Vec<Innings>) -> Result<Self, ModelError> {
        if innings.is_empty() {
            return Err(ModelError::EmptyCareer);
        }
        Ok(Career { player_id: player_id.into(), innings })
    }

    pub fn player_id(&self) -> &str {
        &self.player_id
    }

    pub fn innings(&self) -> &[Innings] {
        &self.innings
    }

    pub fn len(&self) -> usize {
        self.innings.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty careers
    }

    pub fn dismissals(&self) -> usize {
        self.innings.iter().filter(|i| i.dismissed).count()
    }

    pub fn not_outs(&self) -> usize {
        self.len() - self.dismissals()
    }

    pub fn total_runs(&self) -> u64 {
        self.innings.iter().map(|i| u64::from(i.score)).sum()
    }
}

/// Ability parameters for a single innings.
///
/// `mu1` is the effective average when first at the crease, `mu2` the
/// set average, and `big_l` the e-folding timescale (in runs) of the
/// transition between them. All three must be positive and finite;
/// `mu1 == mu2` is the constant-hazard (geometric score) special case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityParams {
    pub mu1: f64,
    pub mu2: f64,
    pub big_l: f64,
}

impl AbilityParams {
    pub fn new(mu1: f64, mu2: f64, big_l: f64) -> Result<Self, ModelError> {
        for (name, value) in [("mu1", mu1), ("mu2", mu2), ("big_l", big_l)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::NonPositiveParam { name, value });
            }
        }
        Ok(AbilityParams { mu1, mu2, big_l })
    }

    /// Construct from the shared-shape reparameterisation `μ1 = C·μ2`,
    /// `L = D·μ2` with `C, D ∈ (0, 1)`.
    pub fn from_reparam(c: f64, d: f64, mu2: f64) -> Result<Self, ModelError> {
        check_unit_open("C", c)?;
        check_unit_open("D", d)?;
        AbilityParams::new(c * mu2, mu2, d * mu2)
    }

    /// Constant-hazard parameters (`μ1 = μ2 = mu`); the timescale is
    /// irrelevant and set to 1.
    pub fn constant(mu: f64) -> Result<Self, ModelError> {
        AbilityParams::new(mu, mu, 1.0)
    }
}

fn check_unit_open(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !(value.is_finite() && value > 0.0 && value < 1.0) {
        return Err(ModelError::CoefficientOutOfRange { name, value });
    }
    Ok(())
}

/// Career-level parameters: shared shape coefficients plus one set
/// average per innings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerParams {
    pub c: f64,
    pub d: f64,
    pub mu2_series: Vec<f64>,
}

impl CareerParams {
    pub fn new(c: f64, d: f64, mu2_series: Vec<f64>) -> Result<Self, ModelError> {
        check_unit_open("C", c)?;
        check_unit_open("D", d)?;
        if mu2_series.is_empty() {
            return Err(ModelError::EmptyCareer);
        }
        for &m in &mu2_series {
            if !(m.is_finite() && m > 0.0) {
                return Err(ModelError::NonPositiveParam { name: "mu2", value: m });
            }
        }
        Ok(CareerParams { c, d, mu2_series })
    }

    pub fn innings_params(&self, t: usize) -> AbilityParams {
        let mu2 = self.mu2_series[t];
        AbilityParams { mu1: self.c * mu2, mu2, big_l: self.d * mu2 }
    }
}

/// Effective average on score `x`.
pub fn effective_average(x: u32, p: &AbilityParams) -> f64 {
    p.mu2 + (p.mu1 - p.mu2) * (-(f64::from(x)) / p.big_l).exp()
}

/// Dismissal hazard on score `x`; always in (0, 1).
pub fn hazard(x: u32, p: &AbilityParams) -> f64 {
    1.0 / (effective_average(x, p) + 1.0)
}

/// ln P(X ≥ x): the log-probability of surviving scores 0..x.
///
/// Accumulated term by term as `ln μ(a) − ln(1 + μ(a))`, which stays
/// accurate even when a hazard approaches 1; the product form would
/// also underflow for long careers of survival factors.
pub fn log_survival(x: u32, p: &AbilityParams) -> f64 {
    let delta = p.mu1 - p.mu2;
    let decay = (-1.0 / p.big_l).exp();
    let mut trans = 1.0; // exp(−a/L), advanced multiplicatively
    let mut acc = 0.0;
    for _ in 0..x {
        let mu = p.mu2 + delta * trans;
        acc += mu.ln() - mu.ln_1p();
        trans *= decay;
    }
    acc
}

/// P(X ≥ x).
pub fn survival(x: u32, p: &AbilityParams) -> f64 {
    log_survival(x, p).exp()
}

/// ln P(X = x).
pub fn log_score_pmf(x: u32, p: &AbilityParams) -> f64 {
    log_survival(x, p) - effective_average(x, p).ln_1p()
}

/// P(X = x).
pub fn score_pmf(x: u32, p: &AbilityParams) -> f64 {
    log_score_pmf(x, p).exp()
}

/// Log-likelihood of one innings under the given ability parameters:
/// the score mass for a dismissal, the survival probability for a
/// not-out.
pub fn innings_log_likelihood(innings: Innings, p: &AbilityParams) -> f64 {
    let delta = p.mu1 - p.mu2;
    let decay = (-1.0 / p.big_l).exp();
    let mut trans = 1.0;
    let mut acc = 0.0;
    for _ in 0..innings.score {
        let mu = p.mu2 + delta * trans;
        acc += mu.ln() - mu.ln_1p();
        trans *= decay;
    }
    if innings.dismissed {
        let mu = p.mu2 + delta * trans;
        acc -= mu.ln_1p();
    }
    acc
}

/// Career log-likelihood: the sum of per-innings terms, with innings
/// `t` evaluated under `params.innings_params(t)`.
pub fn career_log_likelihood(career: &Career, params: &CareerParams) -> Result<f64, ModelError> {
    if career.len() != params.mu2_series.len() {
        return Err(ModelError::DimensionMismatch {
            innings: career.len(),
            params: params.mu2_series.len(),
        });
    }
    let total = career
        .innings()
        .iter()
        .enumerate()
        .map(|(t, &inn)| innings_log_likelihood(inn, &params.innings_params(t)))
        .sum();
    Ok(total)
}
