//! Fitting a career: wires the batting likelihood and the GP prior
//! transform into the nested sampler.

use crate::gp::CachedPriorTransform;
use crate::model::{career_log_likelihood, Career};
use crate::sampler::{self, NsConfig, NsResult, Progress, SamplerError, Target};

/// The sampling target for one career: cube coordinates map through
/// the prior transform to per-innings parameters, which score the
/// observed innings. The GP prior is entirely absorbed by the
/// transform, so the likelihood here is the data term alone.
pub struct CareerModel<'a> {
    career: &'a Career,
    transform: CachedPriorTransform,
}

impl<'a> CareerModel<'a> {
    pub fn new(career: &'a Career) -> Self {
        CareerModel { career, transform: CachedPriorTransform::new(career.len()) }
    }

    pub fn career(&self) -> &Career {
        self.career
    }
}

impl Target for CareerModel<'_> {
    fn dim(&self) -> usize {
        self.transform.dim()
    }

    fn log_likelihood(&self, u: &[f64]) -> f64 {
        // The transform is total over the clamped cube for physical
        // career lengths; a factorisation failure or ability overflow
        // is reported as −∞, which the sampler turns into a hard
        // error rather than silently absorbing.
        match self.transform.transform(u) {
            Ok(sample) => career_log_likelihood(self.career, &sample.params)
                .expect("transform emits one set average per innings"),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Fit a career with nested sampling.
pub fn fit_career(career: &Career, cfg: &NsConfig) -> Result<NsResult, SamplerError> {
    fit_career_with_progress(career, cfg, |_| {})
}

/// Fit a career, invoking `on_progress` once per sampler iteration.
pub fn fit_career_with_progress<F>(
    career: &Career,
    cfg: &NsConfig,
    on_progress: F,
) -> Result<NsResult, SamplerError>
where
    F: FnMut(&Progress),
{
    let model = CareerModel::new(career);
    sampler::run_with_progress(&model, cfg, on_progress)
}
