//! Gaussian-process prior over the log of the per-innings set average.
//!
//! `ln μ2(t)` is a GP indexed by innings number with constant mean
//! `ln m` and squared-exponential covariance
//! `K(tᵢ, tⱼ) = σ² · exp(−(tᵢ − tⱼ)² / (2ℓ²))`. Sampling works in
//! whitened coordinates: a unit-cube vector is mapped through the
//! hyperparameter quantile functions and a Cholesky factor so that the
//! nested sampler only ever sees independent uniforms.
//!
//! Unit-cube layout (dimension `5 + I` for an `I`-innings career):
//!
//! ```text
//! [C, D, m, σ, ℓ, z_1 .. z_I]
//! ```
//!
//! with `C ~ Beta(1,2)`, `D ~ Beta(1,5)`, `m ~ Lognormal(ln 25, 0.75²)`,
//! `σ ~ Exponential(rate 10)`, `ℓ ~ Uniform(0, 100)` and `z` the
//! whitened GP coordinates.

use crate::math::standard_normal_quantile;
use crate::model::{CareerParams, ModelError};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use thiserror::Error;

/// Relative jitter added to the covariance diagonal before
/// factorisation, as a fraction of σ².
pub const BASE_JITTER_REL: f64 = 1e-8;
/// Absolute jitter used when σ = 0 leaves nothing to scale by.
pub const BASE_JITTER_ABS: f64 = 1e-12;
/// Each retry multiplies the jitter by this factor.
pub const JITTER_GROWTH: f64 = 10.0;
/// Number of escalation retries after the first attempt.
pub const JITTER_RETRIES: usize = 3;

/// Unit-cube coordinates are clamped this far inside [0, 1] before the
/// quantile functions are applied, so boundary draws stay finite.
pub const UNIT_CLAMP: f64 = 1e-12;

const LOG_MEDIAN_M: f64 = 3.218_875_824_868_201; // ln 25
const SD_LOG_M: f64 = 0.75;
const SIGMA_RATE: f64 = 10.0;
const MAX_ELL: f64 = 100.0;

pub const IDX_C: usize = 0;
pub const IDX_D: usize = 1;
pub const IDX_M: usize = 2;
pub const IDX_SIGMA: usize = 3;
pub const IDX_ELL: usize = 4;
pub const N_HYPERS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("hyperparameter {name} out of range: {value}")]
    HyperOutOfRange { name: &'static str, value: f64 },
    #[error("covariance factorisation failed even after jitter escalation to {final_jitter:e}")]
    FactorisationFailed { final_jitter: f64 },
    #[error("prior vector has length {got}, expected {expected} (5 hypers + one z per innings)")]
    BadVectorLength { got: usize, expected: usize },
    #[error("series length {got} does not match index count {expected}")]
    SeriesLengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// GP hyperparameters: median ability `m`, log-space amplitude `sigma`,
/// innings-scale correlation length `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub m: f64,
    pub sigma: f64,
    pub ell: f64,
}

impl GpHyper {
    pub fn new(m: f64, sigma: f64, ell: f64) -> Result<Self, GpError> {
        if !(m.is_finite() && m > 0.0) {
            return Err(GpError::HyperOutOfRange { name: "m", value: m });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(GpError::HyperOutOfRange { name: "sigma", value: sigma });
        }
        if !(ell.is_finite() && ell > 0.0 && ell <= MAX_ELL) {
            return Err(GpError::HyperOutOfRange { name: "ell", value: ell });
        }
        Ok(GpHyper { m, sigma, ell })
    }
}

/// Squared-exponential covariance over the given innings indices.
/// The diagonal is exactly σ²; jitter is only applied at factorisation.
pub fn build_covariance(t: &[f64], hyper: &GpHyper) -> DMatrix<f64> {
    let s2 = hyper.sigma * hyper.sigma;
    let inv_2l2 = 1.0 / (2.0 * hyper.ell * hyper.ell);
    let n = t.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = s2;
        for j in 0..i {
            let d = t[i] - t[j];
            let v = s2 * (-d * d * inv_2l2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// A successfully factorised covariance, together with the jitter that
/// made it so.
pub struct CovFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    n: usize,
}

impl CovFactor {
    /// Factorise `k + jitter·I`, escalating the jitter by ×10 up to
    /// three times before giving up. `sigma` selects the base jitter
    /// scale (relative to σ², or an absolute floor when σ = 0).
    pub fn new(k: DMatrix<f64>, sigma: f64) -> Result<Self, GpError> {
        let n = k.nrows();
        let base = if sigma > 0.0 { BASE_JITTER_REL * sigma * sigma } else { BASE_JITTER_ABS };
        let mut jitter = base;
        for attempt in 0..=JITTER_RETRIES {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(kj) {
                return Ok(CovFactor { chol, jitter, n });
            }
            if attempt < JITTER_RETRIES {
                jitter *= JITTER_GROWTH;
            }
        }
        Err(GpError::FactorisationFailed { final_jitter: jitter })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower-triangular colouring: `out[i] = Σ_{j≤i} L[i,j] · z[j]`.
    pub fn colour(&self, z: &[f64]) -> Vec<f64> {
        let l = self.chol.l_dirty();
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * zj;
            }
            out[i] = acc;
        }
        out
    }

    /// Solve `(K + jitter·I) x = b`.
    pub fn solve(&self, b: DVector<f64>) -> DVector<f64> {
        let mut x = b;
        self.chol.solve_mut(&mut x);
        x
    }

    /// ln det(K + jitter·I).
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..self.n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }
}

/// Hyperparameters decoded from the first five cube coordinates.
fn hypers_from_cube(u: &[f64]) -> (f64, f64, GpHyper) {
    let uc = |i: usize| u[i].clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP);
    let c = 1.0 - (1.0 - uc(IDX_C)).sqrt();
    let d = 1.0 - (1.0 - uc(IDX_D)).powf(0.2);
    let m = (LOG_MEDIAN_M + SD_LOG_M * standard_normal_quantile(uc(IDX_M))).exp();
    let sigma = -(1.0 - uc(IDX_SIGMA)).ln() / SIGMA_RATE;
    let ell = MAX_ELL * uc(IDX_ELL);
    (c, d, GpHyper { m, sigma, ell })
}

/// A prior sample in model space.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSample {
    pub params: CareerParams,
    pub hyper: GpHyper,
    pub log_mu2: Vec<f64>,
}

/// Map a unit-cube vector to career parameters for an `I`-innings
/// career (GP inputs are the innings indices `1..=I`).
pub fn prior_transform(u: &[f64], innings: usize) -> Result<TransformedSample, GpError> {
    PriorTransform::new(innings).transform(u)
}

/// Reusable transform for a fixed career length. Construction cost is
/// trivial; the value of the struct is the covariance-factor cache in
/// [`CachedPriorTransform`].
#[derive(Debug, Clone)]
pub struct PriorTransform {
    t_indices: Vec<f64>,
}

impl PriorTransform {
    pub fn new(innings: usize) -> Self {
        PriorTransform { t_indices: (1..=innings).map(|t| t as f64).collect() }
    }

    pub fn innings(&self) -> usize {
        self.t_indices.len()
    }

    pub fn dim(&self) -> usize {
        N_HYPERS + self.t_indices.len()
    }

    pub fn transform(&self, u: &[f64]) -> Result<TransformedSample, GpError> {
        self.transform_inner(u, None)
    }

    fn transform_inner(
        &self,
        u: &[f64],
        cache: Option<&Mutex<Option<CacheEntry>>>,
    ) -> Result<TransformedSample, GpError> {
        if u.len() != self.dim() {
            return Err(GpError::BadVectorLength { got: u.len(), expected: self.dim() });
        }
        let (c, d, hyper) = hypers_from_cube(u);
        let n = self.innings();
        let log_m = hyper.m.ln();

        let log_mu2 = if hyper.sigma == 0.0 {
            // Degenerate prior: the ability series is exactly constant.
            vec![log_m; n]
        } else {
            let z: Vec<f64> = u[N_HYPERS..]
                .iter()
                .map(|&ui| standard_normal_quantile(ui.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP)))
                .collect();
            let coloured = self.with_factor(hyper.sigma, hyper.ell, cache, |f| f.colour(&z))?;
            coloured.iter().map(|v| log_m + v).collect()
        };

        let mu2_series: Vec<f64> = log_mu2.iter().map(|&v| v.exp()).collect();
        Ok(TransformedSample {
            params: CareerParams::new(c, d, mu2_series)?,
            hyper,
            log_mu2,
        })
    }

    fn with_factor<R>(
        &self,
        sigma: f64,
        ell: f64,
        cache: Option<&Mutex<Option<CacheEntry>>>,
        use_factor: impl FnOnce(&CovFactor) -> R,
    ) -> Result<R, GpError> {
        if let Some(cache) = cache {
            let mut slot = cache.lock().expect("covariance cache poisoned");
            let hit = matches!(
                &*slot,
                Some(e) if e.sigma_bits == sigma.to_bits() && e.ell_bits == ell.to_bits()
            );
            if !hit {
                let hyper = GpHyper { m: 1.0, sigma, ell };
                let factor = CovFactor::new(build_covariance(&self.t_indices, &hyper), sigma)?;
                *slot = Some(CacheEntry {
                    sigma_bits: sigma.to_bits(),
                    ell_bits: ell.to_bits(),
                    factor,
                });
            }
            Ok(use_factor(&slot.as_ref().expect("cache entry just inserted").factor))
        } else {
            let hyper = GpHyper { m: 1.0, sigma, ell };
            let factor = CovFactor::new(build_covariance(&self.t_indices, &hyper), sigma)?;
            Ok(use_factor(&factor))
        }
    }
}

struct CacheEntry {
    sigma_bits: u64,
    ell_bits: u64,
    factor: CovFactor,
}

/// [`PriorTransform`] plus a single-slot covariance-factor cache keyed
/// on (σ, ℓ). The nested sampler's proposals frequently leave both
/// untouched, and the Cholesky factorisation dominates the transform
/// cost, so the cache pays for itself many times over. Safe for
/// concurrent use; caching never changes results, only timing.
pub struct CachedPriorTransform {
    inner: PriorTransform,
    cache: Mutex<Option<CacheEntry>>,
}

impl CachedPriorTransform {
    pub fn new(innings: usize) -> Self {
        CachedPriorTransform { inner: PriorTransform::new(innings), cache: Mutex::new(None) }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn innings(&self) -> usize {
        self.inner.innings()
    }

    pub fn transform(&self, u: &[f64]) -> Result<TransformedSample, GpError> {
        self.inner.transform_inner(u, Some(&self.cache))
    }
}

/// Log-density of a log-ability series under the GP prior (a
/// multivariate normal with the jittered covariance). Diagnostic-path
/// code; the sampler itself never needs this.
pub fn gp_log_density(log_mu2: &[f64], hyper: &GpHyper, t: &[f64]) -> Result<f64, GpError> {
    if log_mu2.len() != t.len() {
        return Err(GpError::SeriesLengthMismatch { got: log_mu2.len(), expected: t.len() });
    }
    let n = t.len();
    let factor = CovFactor::new(build_covariance(t, hyper), hyper.sigma)?;
    let log_m = hyper.m.ln();
    let r = DVector::from_iterator(n, log_mu2.iter().map(|&y| y - log_m));
    let alpha = factor.solve(r.clone());
    let quad = r.dot(&alpha);
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    Ok(-0.5 * (quad + factor.log_det() + n as f64 * LN_2PI))
}

/// Noiseless GP conditional (kriging) of the series at `test_t` given
/// observed values `train_y` at `train_t`. Returns the conditional
/// mean and covariance; the covariance comes back without jitter.
pub fn conditional(
    train_t: &[f64],
    train_y: &[f64],
    test_t: &[f64],
    hyper: &GpHyper,
) -> Result<(Vec<f64>, DMatrix<f64>), GpError> {
    if train_y.len() != train_t.len() {
        return Err(GpError::SeriesLengthMismatch { got: train_y.len(), expected: train_t.len() });
    }
    let n = train_t.len();
    let h = test_t.len();
    let log_m = hyper.m.ln();

    if hyper.sigma == 0.0 {
        // No prior variance: the conditional collapses to the mean.
        return Ok((vec![log_m; h], DMatrix::zeros(h, h)));
    }

    let factor = CovFactor::new(build_covariance(train_t, hyper), hyper.sigma)?;
    let s2 = hyper.sigma * hyper.sigma;
    let inv_2l2 = 1.0 / (2.0 * hyper.ell * hyper.ell);
    let kx = DMatrix::from_fn(n, h, |i, j| {
        let d = train_t[i] - test_t[j];
        s2 * (-d * d * inv_2l2).exp()
    });

    let r = DVector::from_iterator(n, train_y.iter().map(|&y| y - log_m));
    let alpha = factor.solve(r);
    let mean: Vec<f64> = (0..h).map(|j| log_m + kx.column(j).dot(&alpha)).collect();

    let kxx = build_covariance(test_t, hyper);
    let mut kinv_kx = kx.clone();
    for j in 0..h {
        let mut col = kinv_kx.column_mut(j);
        let solved = factor.solve(DVector::from_column_slice(col.as_slice()));
        col.copy_from(&solved);
    }
    let cov = kxx - kx.transpose() * kinv_kx;
    Ok((mean, cov))
}
