//! Information diagnostics for explanations: how much of a Shapley value
//! is signal versus sampling noise, and whether a value population is
//! Gaussian at all.

use super::{sampled_shapley, ExplainError, ReferenceSample};
use crate::models::Predictor;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Per-feature sample variance of the sampled Shapley values across
/// `trials` independent rounds of `sampled_shapley`, each on its own seed
/// substream. Estimates the sampling-noise variance.
pub fn estimate_noise_var(
    model: &dyn Predictor,
    x: &[f64],
    x0: &ReferenceSample,
    class: usize,
    nu: u32,
    trials: u32,
    seed: u64,
) -> Result<Vec<f64>, ExplainError> {
    if trials < 2 {
        return Err(ExplainError::InvalidParameter(
            "need at least 2 trials for a variance".into(),
        ));
    }
    let runs: Vec<Vec<f64>> = (0..trials)
        .map(|t| {
            sampled_shapley(
                model,
                x,
                x0,
                class,
                nu,
                crate::rng::substream_seed(seed, u64::from(t)),
            )
            .map(|e| e.shapley)
        })
        .collect::<Result<_, _>>()?;
    Ok(variance_per_feature(&runs))
}

/// Unbiased per-feature variance across repeated explanation vectors.
pub fn variance_per_feature(runs: &[Vec<f64>]) -> Vec<f64> {
    let trials = runs.len();
    let n = runs.first().map_or(0, Vec::len);
    let mut means = vec![0.0f64; n];
    for run in runs {
        for (m, v) in means.iter_mut().zip(run) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= trials as f64;
    }
    let mut vars = vec![0.0f64; n];
    for run in runs {
        for ((v, m), x) in vars.iter_mut().zip(&means).zip(run) {
            let d = x - m;
            *v += d * d;
        }
    }
    for v in &mut vars {
        *v /= (trials - 1) as f64;
    }
    vars
}

/// Gaussian mutual-information estimate between a feature and its Shapley
/// value: `0.5 * log2(var_s / var_eps)` bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub bits: f64,
    /// Set when the noise variance exceeds the signal variance; the
    /// estimate is clamped to zero (nothing recoverable).
    pub noise_dominated: bool,
}

pub fn mi_gaussian(var_s: f64, var_eps: f64) -> Result<MiEstimate, ExplainError> {
    if var_eps <= 0.0 || !var_eps.is_finite() {
        return Err(ExplainError::InvalidParameter(format!(
            "noise variance {var_eps} must be positive"
        )));
    }
    if var_s < 0.0 || !var_s.is_finite() {
        return Err(ExplainError::InvalidParameter(format!(
            "signal variance {var_s} must be non-negative"
        )));
    }
    if var_s < var_eps {
        return Ok(MiEstimate {
            bits: 0.0,
            noise_dominated: true,
        });
    }
    Ok(MiEstimate {
        bits: 0.5 * (var_s / var_eps).log2(),
        noise_dominated: false,
    })
}

/// Chi-square goodness-of-fit of a fitted Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTest {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

/// Test whether `values` look Gaussian: fit mean/variance, bin into
/// `n_bins` equiprobable bins under the fit, and compare counts with a
/// chi-square on `n_bins - 3` degrees of freedom (two estimated
/// parameters).
pub fn gaussian_fit_test(values: &[f64], n_bins: usize) -> Result<FitTest, ExplainError> {
    if n_bins < 4 {
        return Err(ExplainError::InvalidParameter(
            "need at least 4 bins for positive degrees of freedom".into(),
        ));
    }
    let m = values.len();
    if m < 5 * n_bins {
        return Err(ExplainError::NotEnoughSamples {
            need: 5 * n_bins,
            have: m,
        });
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    if var <= 0.0 {
        return Err(ExplainError::InvalidParameter(
            "zero variance; nothing to fit".into(),
        ));
    }
    let fitted = Normal::new(mean, var.sqrt()).expect("positive std");

    // Equiprobable bin edges under the fitted Gaussian.
    let edges: Vec<f64> = (1..n_bins)
        .map(|j| fitted.inverse_cdf(j as f64 / n_bins as f64))
        .collect();
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let bin = edges.partition_point(|&e| e < v);
        counts[bin] += 1;
    }

    let expected = m as f64 / n_bins as f64;
    let statistic = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum::<f64>();
    let dof = n_bins - 3;
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    Ok(FitTest {
        statistic,
        p_value: 1.0 - chi.cdf(statistic),
        dof,
    })
}
