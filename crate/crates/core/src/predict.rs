//! Posterior predictions: expected-score trajectories, forecasts
//! beyond the observed career, and head-to-head comparisons.
//!
//! The central quantity is ν, the expected score of one innings under
//! fixed ability parameters, `ν = Σ_{x≥1} P(X ≥ x)`. Because the
//! hazard settles exponentially fast to its set value, the sum is
//! taken explicitly only until the transient is below numerical
//! noise and closed geometrically from there, making ν exact for
//! constant hazards and cheap for everything else.

use crate::exec;
use crate::gp::{conditional, CovFactor, GpError, PriorTransform, TransformedSample};
use crate::math::quantile_sorted;
use crate::model::{AbilityParams, MAX_SUM_TERMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative mass left unaccounted when a comparison pass stops.
const COMPARE_TAIL_EPS: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("at least one posterior draw is required")]
    NoDraws,
    #[error("draws disagree on career length ({first} vs {other})")]
    RaggedDraws { first: usize, other: usize },
    #[error("credible level must lie in (0, 1], got {level}")]
    BadLevel { level: f64 },
    #[error("forecast horizon must be at least 1")]
    ZeroHorizon,
    #[error("forecasts pair draw-by-draw and need equal draw counts, got {a} and {b}")]
    UnequalDrawCounts { a: usize, b: usize },
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Expected score ν of a single innings.
///
/// Survival probabilities are accumulated until the transient part of
/// the hazard is negligible at the target precision, after which the
/// remaining tail is geometric with ratio `μ2/(μ2+1)` and sums to
/// `S(x*) · μ2` in closed form.
pub fn nu(p: &AbilityParams) -> f64 {
    let delta = p.mu1 - p.mu2;
    let x_star: u64 = if delta == 0.0 {
        1
    } else {
        // Run the explicit sum until |μ(x) − μ2| dilutes below 1e-13
        // of the local log-survival slope, then switch.
        let arg = delta.abs() * (p.big_l + 1.0) * 1e13 / (p.mu2 * (p.mu2 + 1.0));
        if arg <= 1.0 {
            1
        } else {
            ((p.big_l * arg.ln()).ceil() as u64 + 1).clamp(1, MAX_SUM_TERMS)
        }
    };

    let decay = (-1.0 / p.big_l).exp();
    let mut trans = 1.0; // exp(−x/L)
    let mut surv = 1.0; // S(x)
    let mut total = 0.0;
    for _ in 0..x_star {
        let mu = p.mu2 + delta * trans;
        surv *= mu / (mu + 1.0);
        total += surv;
        trans *= decay;
        if surv == 0.0 {
            return total;
        }
    }
    total + surv * p.mu2
}

/// Pointwise quantile summary of per-draw ν trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuCurve {
    /// Innings numbers the columns refer to (1-based).
    pub t: Vec<u32>,
    pub median: Vec<f64>,
    pub band_low: Vec<f64>,
    pub band_high: Vec<f64>,
    /// Central credible mass between `band_low` and `band_high`;
    /// level 1 gives the pointwise min/max envelope.
    pub level: f64,
    /// The individual trajectories (draw-major), if retained.
    pub sample_curves: Option<Vec<Vec<f64>>>,
}

/// Decode resampled cube positions back into model space.
pub fn decode_draws(
    u_draws: &[Vec<f64>],
    innings: usize,
) -> Result<Vec<TransformedSample>, GpError> {
    let tf = PriorTransform::new(innings);
    exec::map_indexed(u_draws, |u| tf.transform(u)).into_iter().collect()
}

/// Summarise the posterior ν trajectory over the observed innings.
pub fn nu_curve(
    draws: &[TransformedSample],
    level: f64,
    retain_curves: bool,
) -> Result<NuCurve, PredictError> {
    let innings = check_draws(draws)?;
    let curves = exec::map_indexed(draws, |d| {
        (0..innings).map(|t| nu(&d.params.innings_params(t))).collect::<Vec<f64>>()
    });
    summarise(curves, 1, level, retain_curves)
}

fn check_draws(draws: &[TransformedSample]) -> Result<usize, PredictError> {
    let first = draws.first().ok_or(PredictError::NoDraws)?.params.mu2_series.len();
    for d in draws {
        let got = d.params.mu2_series.len();
        if got != first {
            return Err(PredictError::RaggedDraws { first, other: got });
        }
    }
    Ok(first)
}

fn summarise(
    curves: Vec<Vec<f64>>,
    first_innings: u32,
    level: f64,
    retain_curves: bool,
) -> Result<NuCurve, PredictError> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(PredictError::BadLevel { level });
    }
    let len = curves[0].len();
    let q_lo = (1.0 - level) / 2.0;
    let q_hi = 1.0 - q_lo;
    let mut median = Vec::with_capacity(len);
    let mut band_low = Vec::with_capacity(len);
    let mut band_high = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(curves.len());
    for t in 0..len {
        column.clear();
        column.extend(curves.iter().map(|c| c[t]));
        column.sort_by(|a, b| a.partial_cmp(b).expect("ν values are finite"));
        median.push(quantile_sorted(&column, 0.5));
        band_low.push(quantile_sorted(&column, q_lo));
        band_high.push(quantile_sorted(&column, q_hi));
    }
    Ok(NuCurve {
        t: (0..len as u32).map(|i| first_innings + i).collect(),
        median,
        band_low,
        band_high,
        level,
        sample_curves: retain_curves.then_some(curves),
    })
}

/// A posterior forecast of the innings after the observed career.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// Number of future innings covered.
    pub horizon: usize,
    /// ν summary over innings `I+1 ..= I+horizon`.
    pub curve: NuCurve,
    /// Per-draw ν at the next innings (`I+1`), paired with `next_params`.
    pub next_nus: Vec<f64>,
    /// Per-draw ability parameters at the next innings.
    pub next_params: Vec<AbilityParams>,
}

impl Forecast {
    /// Posterior mean expected score of the next innings.
    pub fn next_innings_nu(&self) -> f64 {
        self.next_nus.iter().sum::<f64>() / self.next_nus.len() as f64
    }
}

/// Extend each posterior draw `horizon` innings past the career end by
/// sampling its GP conditional, and summarise the resulting ν values.
///
/// Draw `i` uses RNG stream `i` of `seed`, so the result is identical
/// however the work is scheduled.
pub fn extrapolate(
    draws: &[TransformedSample],
    horizon: usize,
    level: f64,
    seed: u64,
) -> Result<Forecast, PredictError> {
    if horizon == 0 {
        return Err(PredictError::ZeroHorizon);
    }
    let innings = check_draws(draws)?;
    let train_t: Vec<f64> = (1..=innings).map(|t| t as f64).collect();
    let test_t: Vec<f64> = (innings + 1..=innings + horizon).map(|t| t as f64).collect();

    let indices: Vec<usize> = (0..draws.len()).collect();
    let results = exec::map_indexed(&indices, |&i| -> Result<_, PredictError> {
        let d = &draws[i];
        let (mean, cov) = conditional(&train_t, &d.log_mu2, &test_t, &d.hyper)?;
        let path = if d.hyper.sigma == 0.0 {
            mean
        } else {
            let factor = CovFactor::new(cov, d.hyper.sigma)?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z: Vec<f64> = (0..horizon).map(|_| rng.sample(StandardNormal)).collect();
            let coloured = factor.colour(&z);
            mean.iter().zip(&coloured).map(|(m, c)| m + c).collect()
        };
        let future: Vec<AbilityParams> = path
            .iter()
            .map(|&log_mu2| {
                let mu2 = log_mu2.exp();
                AbilityParams { mu1: d.params.c * mu2, mu2, big_l: d.params.d * mu2 }
            })
            .collect();
        let nus: Vec<f64> = future.iter().map(nu).collect();
        Ok((nus, future[0]))
    });
    let mut curves = Vec::with_capacity(draws.len());
    let mut next_params = Vec::with_capacity(draws.len());
    for r in results {
        let (nus, next) = r?;
        curves.push(nus);
        next_params.push(next);
    }

    let next_nus: Vec<f64> = curves.iter().map(|c| c[0]).collect();
    let curve = summarise(curves, innings as u32 + 1, level, true)?;
    Ok(Forecast { horizon, curve, next_nus, next_params })
}

/// Probabilities that innings score A exceeds, ties, or trails score B
/// for two independent innings with the given parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutscoreProbs {
    pub p_a_greater: f64,
    pub p_tie: f64,
    pub p_b_greater: f64,
}

/// Exact single-pass computation of the outscore probabilities.
///
/// At each score `x` the pass accrues `P(A = B = x)`,
/// `P(B = x, A > x)` and `P(A = x, B > x)`; the unaccounted mass is
/// `S_A(x+1)·S_B(x+1)`, so stopping once that is below 1e-13 bounds
/// the truncation error by the same amount.
pub fn outscore_probabilities(pa: &AbilityParams, pb: &AbilityParams) -> OutscoreProbs {
    let da = pa.mu1 - pa.mu2;
    let db = pb.mu1 - pb.mu2;
    let ka = (-1.0 / pa.big_l).exp();
    let kb = (-1.0 / pb.big_l).exp();
    let mut ta = 1.0;
    let mut tb = 1.0;
    let mut sa = 1.0;
    let mut sb = 1.0;
    let mut p_a = 0.0;
    let mut tie = 0.0;
    let mut p_b = 0.0;
    for _ in 0..MAX_SUM_TERMS {
        let mu_a = pa.mu2 + da * ta;
        let mu_b = pb.mu2 + db * tb;
        let pmf_a = sa / (mu_a + 1.0);
        let pmf_b = sb / (mu_b + 1.0);
        sa -= pmf_a;
        sb -= pmf_b;
        tie += pmf_a * pmf_b;
        p_a += pmf_b * sa;
        p_b += pmf_a * sb;
        ta *= ka;
        tb *= kb;
        if sa * sb < COMPARE_TAIL_EPS {
            break;
        }
    }
    OutscoreProbs { p_a_greater: p_a, p_tie: tie, p_b_greater: p_b }
}

/// Head-to-head summary of two next-innings forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Posterior mean of ν_A − ν_B at the next innings.
    pub expected_margin: f64,
    /// Posterior probability that A outscores B next innings.
    pub p_outscore: f64,
    pub p_tie: f64,
    pub p_outscored: f64,
    pub n_pairs: usize,
}

/// Compare two forecasts draw-by-draw.
///
/// Draws are paired by index so that shared posterior structure
/// cancels; comparing a forecast against itself gives a margin of
/// exactly zero and exactly symmetric outscore probabilities.
pub fn compare(a: &Forecast, b: &Forecast) -> Result<Comparison, PredictError> {
    if a.next_params.len() != b.next_params.len() {
        return Err(PredictError::UnequalDrawCounts {
            a: a.next_params.len(),
            b: b.next_params.len(),
        });
    }
    let n = a.next_params.len();
    let indices: Vec<usize> = (0..n).collect();
    let probs = exec::map_indexed(&indices, |&i| {
        outscore_probabilities(&a.next_params[i], &b.next_params[i])
    });
    let mut p_outscore = 0.0;
    let mut p_tie = 0.0;
    let mut p_outscored = 0.0;
    for p in &probs {
        p_outscore += p.p_a_greater;
        p_tie += p.p_tie;
        p_outscored += p.p_b_greater;
    }
    let nf = n as f64;
    let expected_margin =
        a.next_nus.iter().zip(&b.next_nus).map(|(x, y)| x - y).sum::<f64>() / nf;
    Ok(Comparison {
        expected_margin,
        p_outscore: p_outscore / nf,
        p_tie: p_tie / nf,
        p_outscored: p_outscored / nf,
        n_pairs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpHyper;
    use crate::model::{effective_average, score_pmf, CareerParams};

    #[test]
    fn nu_is_exact_for_constant_hazard() {
        for mu in [1.0, 9.0, 25.0, 49.99, 1e4] {
            let p = AbilityParams::constant(mu).unwrap();
            let v = nu(&p);
            assert!(
                ((v - mu) / mu).abs() < 1e-12,
                "constant μ = {mu}: ν = {v}"
            );
        }
    }

    #[test]
    fn nu_matches_brute_survival_sum() {
        let cases = [
            AbilityParams::new(20.0, 40.0, 5.0).unwrap(),
            AbilityParams::new(5.0, 60.0, 30.0).unwrap(),
            AbilityParams::new(45.0, 20.0, 10.0).unwrap(),
            AbilityParams::new(0.5, 30.0, 2.0).unwrap(),
        ];
        for p in cases {
            // Oracle: log-space survival accumulation, truncated far
            // past any mass (S(10⁵) is astronomically small here).
            let mut log_s = 0.0;
            let mut brute = 0.0;
            for x in 0..100_000u32 {
                let mu = effective_average(x, &p);
                log_s += mu.ln() - mu.ln_1p();
                brute += log_s.exp();
            }
            let fast = nu(&p);
            assert!(
                ((fast - brute) / brute).abs() < 1e-6,
                "ν = {fast} vs brute {brute} for {p:?}"
            );
        }
    }

    #[test]
    fn nu_increases_with_set_average() {
        let mut prev = 0.0;
        for mu2 in [10.0, 20.0, 40.0, 80.0] {
            let p = AbilityParams::from_reparam(0.5, 0.2, mu2).unwrap();
            let v = nu(&p);
            assert!(v > prev);
            prev = v;
        }
    }

    fn constant_draw(mu2: f64, innings: usize) -> TransformedSample {
        let params = CareerParams::new(0.5, 0.2, vec![mu2; innings]).unwrap();
        let log_mu2 = vec![mu2.ln(); innings];
        TransformedSample {
            params,
            hyper: GpHyper::new(mu2, 0.0, 10.0).unwrap(),
            log_mu2,
        }
    }

    #[test]
    fn curve_quantiles_track_the_middle_draw() {
        let draws = vec![constant_draw(10.0, 3), constant_draw(20.0, 3), constant_draw(30.0, 3)];
        let curve = nu_curve(&draws, 1.0, true).unwrap();
        assert_eq!(curve.t, vec![1, 2, 3]);
        let mid = nu(&draws[1].params.innings_params(0));
        let lo = nu(&draws[0].params.innings_params(0));
        let hi = nu(&draws[2].params.innings_params(0));
        for t in 0..3 {
            assert_eq!(curve.median[t], mid);
            assert_eq!(curve.band_low[t], lo);
            assert_eq!(curve.band_high[t], hi);
        }
        let curves = curve.sample_curves.as_ref().unwrap();
        assert_eq!(curves.len(), 3);
        assert_eq!(curves[0].len(), 3);
    }

    #[test]
    fn curve_band_narrows_with_level() {
        let draws: Vec<TransformedSample> =
            (1..=9).map(|i| constant_draw(10.0 + i as f64, 2)).collect();
        let wide = nu_curve(&draws, 0.9, false).unwrap();
        let narrow = nu_curve(&draws, 0.5, false).unwrap();
        for t in 0..2 {
            assert!(narrow.band_low[t] >= wide.band_low[t]);
            assert!(narrow.band_high[t] <= wide.band_high[t]);
            assert!(narrow.band_low[t] < narrow.band_high[t]);
        }
        assert!(wide.sample_curves.is_none());
    }

    #[test]
    fn curve_rejects_bad_input() {
        assert_eq!(nu_curve(&[], 0.68, false), Err(PredictError::NoDraws));
        let draws = vec![constant_draw(10.0, 2)];
        assert!(matches!(
            nu_curve(&draws, 0.0, false),
            Err(PredictError::BadLevel { .. })
        ));
        let ragged = vec![constant_draw(10.0, 2), constant_draw(12.0, 3)];
        assert!(matches!(
            nu_curve(&ragged, 0.68, false),
            Err(PredictError::RaggedDraws { first: 2, other: 3 })
        ));
    }

    #[test]
    fn extrapolate_with_zero_amplitude_is_deterministic_flat() {
        let draws = vec![constant_draw(25.0, 6); 4];
        let f = extrapolate(&draws, 5, 0.68, 99).unwrap();
        assert_eq!(f.horizon, 5);
        assert_eq!(f.curve.t, vec![7, 8, 9, 10, 11]);
        // The conditional mean passes through exp(ln 25), so compare
        // at floating-point round-trip precision.
        let expect = nu(&AbilityParams::from_reparam(0.5, 0.2, 25.0).unwrap());
        for t in 0..5 {
            assert!((f.curve.median[t] - expect).abs() < 1e-12 * expect);
            assert_eq!(f.curve.band_low[t], f.curve.band_high[t]);
        }
        assert!((f.next_innings_nu() - expect).abs() < 1e-12 * expect);
        for p in &f.next_params {
            assert!((p.mu2 - 25.0).abs() < 1e-12);
        }
    }

    fn wiggly_draw(innings: usize, sigma: f64, ell: f64) -> TransformedSample {
        let log_mu2: Vec<f64> =
            (0..innings).map(|t| 30.0f64.ln() + 0.1 * (t as f64 * 0.7).sin()).collect();
        let mu2: Vec<f64> = log_mu2.iter().map(|v| v.exp()).collect();
        TransformedSample {
            params: CareerParams::new(0.4, 0.15, mu2).unwrap(),
            hyper: GpHyper::new(30.0, sigma, ell).unwrap(),
            log_mu2,
        }
    }

    #[test]
    fn extrapolation_is_reproducible_and_seed_sensitive() {
        let draws = vec![wiggly_draw(10, 0.2, 20.0), wiggly_draw(10, 0.3, 8.0)];
        let a = extrapolate(&draws, 4, 0.68, 7).unwrap();
        let b = extrapolate(&draws, 4, 0.68, 7).unwrap();
        assert_eq!(a, b);
        let c = extrapolate(&draws, 4, 0.68, 8).unwrap();
        assert_ne!(a.next_nus, c.next_nus);
    }

    #[test]
    fn extrapolation_continues_a_strongly_correlated_series() {
        // Constant observed log-series, long correlation length: the
        // next innings must sit close to the series level.
        let level = 35.0f64.ln();
        let innings = 10;
        let log_mu2 = vec![level; innings];
        let mu2: Vec<f64> = log_mu2.iter().map(|v| v.exp()).collect();
        let draw = TransformedSample {
            params: CareerParams::new(0.5, 0.2, mu2).unwrap(),
            hyper: GpHyper::new(30.0, 0.2, 50.0).unwrap(),
            log_mu2,
        };
        let f = extrapolate(&[draw], 1, 0.68, 3).unwrap();
        let got = f.next_params[0].mu2.ln();
        assert!(
            (got - level).abs() < 0.05,
            "next log-ability {got} strayed from {level}"
        );
    }

    #[test]
    fn extrapolation_handles_long_horizons_at_long_correlation() {
        // Near-singular conditional covariance: jitter must cope.
        let draw = wiggly_draw(12, 0.25, 99.0);
        let f = extrapolate(&[draw], 24, 0.68, 1).unwrap();
        assert_eq!(f.curve.t.len(), 24);
        for v in &f.curve.median {
            assert!(v.is_finite() && *v > 0.0);
        }
    }

    #[test]
    fn outscore_matches_geometric_closed_form() {
        // Matching geometric batters: P(tie) = H²/(1 − q²) = 1/19 for
        // μ = 9, and the rest splits evenly.
        let p = AbilityParams::constant(9.0).unwrap();
        let probs = outscore_probabilities(&p, &p);
        assert!((probs.p_tie - 1.0 / 19.0).abs() < 1e-12);
        assert!((probs.p_a_greater - 9.0 / 19.0).abs() < 1e-12);
        assert_eq!(probs.p_a_greater, probs.p_b_greater);
        let total = probs.p_a_greater + probs.p_tie + probs.p_b_greater;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outscore_matches_brute_double_sum() {
        let pa = AbilityParams::constant(99.0).unwrap();
        let pb = AbilityParams::constant(9.0).unwrap();
        let n = 2000u32;
        let pmf_a: Vec<f64> = (0..n).map(|x| score_pmf(x, &pa)).collect();
        let pmf_b: Vec<f64> = (0..n).map(|x| score_pmf(x, &pb)).collect();
        let mut brute_a = 0.0;
        let mut brute_tie = 0.0;
        let mut brute_b = 0.0;
        for x in 0..n as usize {
            for y in 0..n as usize {
                let m = pmf_a[x] * pmf_b[y];
                match x.cmp(&y) {
                    std::cmp::Ordering::Greater => brute_a += m,
                    std::cmp::Ordering::Equal => brute_tie += m,
                    std::cmp::Ordering::Less => brute_b += m,
                }
            }
        }
        let probs = outscore_probabilities(&pa, &pb);
        assert!((probs.p_a_greater - brute_a).abs() < 1e-6);
        assert!((probs.p_tie - brute_tie).abs() < 1e-6);
        assert!((probs.p_b_greater - brute_b).abs() < 1e-6);
        // A 99-average batter dominates a 9-average one.
        assert!(probs.p_a_greater > 0.85);
    }

    #[test]
    fn outscore_with_transient_hazard_sums_to_one() {
        let pa = AbilityParams::new(15.0, 45.0, 8.0).unwrap();
        let pb = AbilityParams::new(30.0, 25.0, 3.0).unwrap();
        let probs = outscore_probabilities(&pa, &pb);
        let total = probs.p_a_greater + probs.p_tie + probs.p_b_greater;
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
    }

    #[test]
    fn self_comparison_is_exactly_symmetric() {
        let draws = vec![wiggly_draw(8, 0.2, 15.0), wiggly_draw(8, 0.1, 40.0)];
        let f = extrapolate(&draws, 3, 0.68, 21).unwrap();
        let cmp = compare(&f, &f).unwrap();
        assert_eq!(cmp.expected_margin, 0.0);
        assert_eq!(cmp.p_outscore, cmp.p_outscored);
        assert_eq!(cmp.n_pairs, 2);
        let total = cmp.p_outscore + cmp.p_tie + cmp.p_outscored;
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stronger_batter_wins_the_comparison() {
        let strong = vec![constant_draw(60.0, 5); 3];
        let weak = vec![constant_draw(15.0, 5); 3];
        let fs = extrapolate(&strong, 2, 0.68, 4).unwrap();
        let fw = extrapolate(&weak, 2, 0.68, 5).unwrap();
        let cmp = compare(&fs, &fw).unwrap();
        assert!(cmp.expected_margin > 20.0);
        assert!(cmp.p_outscore > 0.7);
        assert!(cmp.p_outscore + cmp.p_tie + cmp.p_outscored <= 1.0 + 1e-10);
    }

    #[test]
    fn compare_rejects_unequal_draw_counts() {
        let a = extrapolate(&vec![constant_draw(20.0, 4); 3], 1, 0.68, 1).unwrap();
        let b = extrapolate(&vec![constant_draw(20.0, 4); 2], 1, 0.68, 1).unwrap();
        assert_eq!(
            compare(&a, &b),
            Err(PredictError::UnequalDrawCounts { a: 3, b: 2 })
        );
    }
}
