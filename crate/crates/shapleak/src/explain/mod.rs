//! Shapley explanations: exact enumeration over all feature subsets and
//! the permutation-sampling approximation with its Hoeffding-style sample
//! bound, plus the Gaussian information diagnostics in [`diagnostics`].

mod diagnostics;
mod io;

pub use diagnostics::{
    estimate_noise_var, gaussian_fit_test, mi_gaussian, variance_per_feature, FitTest, MiEstimate,
};
pub use io::{read_explanations, write_explanations, ExplanationRecord};

use crate::models::Predictor;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest feature count the exact engine enumerates (2^n model calls).
pub const MAX_EXACT_FEATURES: usize = 20;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("input has {got} features, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature index {index} out of range for {n} features")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("target class {class} out of range for {n_classes} classes")]
    BadClass { class: usize, n_classes: usize },
    #[error(
        "exact enumeration supports at most {MAX_EXACT_FEATURES} features, got {got}; \
         use the sampled method"
    )]
    TooManyFeatures { got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {need} samples, have {have}")]
    NotEnoughSamples { need: usize, have: usize },
    #[error("explanation io: {0}")]
    Io(String),
}

/// How an explanation was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ExplainMethod {
    Exact,
    Sampled { nu: u32 },
}

/// The reference sample x0 whose values stand in for absent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub values: Vec<f64>,
    /// Where x0 came from, e.g. `train:17`.
    pub id: String,
}

impl ReferenceSample {
    pub fn from_train_row(train: &crate::data::Dataset, row: usize) -> Self {
        Self {
            values: train.features[row].clone(),
            id: format!("train:{row}"),
        }
    }
}

/// A Shapley explanation of one sample for one target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// One value per feature.
    pub shapley: Vec<f64>,
    pub target_class: usize,
    pub method: ExplainMethod,
    /// Identifier of the reference sample used.
    pub reference_id: String,
    /// Sampling seed; absent for the exact method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Compose the masked sample: keep `x_j` for `j` in `keep`, take the
/// reference value elsewhere.
pub fn compose_masked(
    x: &[f64],
    x0: &ReferenceSample,
    keep: &[usize],
) -> Result<Vec<f64>, ExplainError> {
    if x.len() != x0.values.len() {
        return Err(ExplainError::DimensionMismatch {
            expected: x0.values.len(),
            got: x.len(),
        });
    }
    let mut out = x0.values.clone();
    for &j in keep {
        if j >= x.len() {
            return Err(ExplainError::IndexOutOfRange {
                index: j,
                n: x.len(),
            });
        }
        out[j] = x[j];
    }
    Ok(out)
}

fn check_inputs(
    model: &dyn Predictor,
    x: &[f64],
    x0: &ReferenceSample,
    class: usize,
) -> Result<(), ExplainError> {
    if x.len() != model.n_inputs() {
        return Err(ExplainError::DimensionMismatch {
            expected: model.n_inputs(),
            got: x.len(),
        });
    }
    if x0.values.len() != model.n_inputs() {
        return Err(ExplainError::DimensionMismatch {
            expected: model.n_inputs(),
            got: x0.values.len(),
        });
    }
    if class >= model.n_classes() {
        return Err(ExplainError::BadClass {
            class,
            n_classes: model.n_classes(),
        });
    }
    Ok(())
}

/// Exact Shapley values by enumerating every feature subset:
/// `s_i = (1/n) * sum over S of (f(x_[S+i]) - f(x_[S])) / C(n-1, |S|)`.
///
/// Costs `2^n` model evaluations; refuses beyond [`MAX_EXACT_FEATURES`].
pub fn exact_shapley(
    model: &dyn Predictor,
    x: &[f64],
    x0: &ReferenceSample,
    class: usize,
) -> Result<Explanation, ExplainError> {
    check_inputs(model, x, x0, class)?;
    let n = x.len();
    if n > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures { got: n });
    }

    // Target-class output for every masked composition, indexed by the
    // keep-set bitmask.
    let size = 1usize << n;
    let mut values = vec![0.0f64; size];
    let mut composed = x0.values.clone();
    let mut probs = vec![0.0; model.n_classes()];
    for (mask, slot) in values.iter_mut().enumerate() {
        for j in 0..n {
            composed[j] = if mask >> j & 1 == 1 { x[j] } else { x0.values[j] };
        }
        model.predict_into(&composed, &mut probs);
        *slot = probs[class];
    }

    // weight[k] = 1 / (n * C(n-1, k)) for a preceding set of size k.
    let mut weight = vec![0.0f64; n];
    let mut binom = 1.0f64;
    for (k, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
    }

    let shapley = (0..n)
        .map(|i| {
            let bit = 1usize << i;
            let mut s = 0.0;
            for mask in 0..size {
                if mask & bit == 0 {
                    s += weight[(mask as u32).count_ones() as usize]
                        * (values[mask | bit] - values[mask]);
                }
            }
            s
        })
        .collect();

    Ok(Explanation {
        shapley,
        target_class: class,
        method: ExplainMethod::Exact,
        reference_id: x0.id.clone(),
        seed: None,
    })
}

/// Permutations needed so each sampled Shapley value is within `epsilon`
/// of the exact one with probability `1 - delta`, for marginal
/// contributions of range `r_m`: `ceil(ln(2/delta) * r_m^2 / (2 eps^2))`.
pub fn permutations_needed(delta: f64, epsilon: f64, r_m: f64) -> Result<u32, ExplainError> {
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(ExplainError::InvalidParameter(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(ExplainError::InvalidParameter(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    if r_m <= 0.0 || !r_m.is_finite() {
        return Err(ExplainError::InvalidParameter(format!(
            "marginal range {r_m} must be positive"
        )));
    }
    let nu = ((2.0 / delta).ln() * r_m * r_m / (2.0 * epsilon * epsilon)).ceil();
    Ok(nu.max(1.0) as u32)
}

/// Permutation-sampled Shapley values: average the marginal contribution
/// of each feature over `nu` seeded uniform permutations, walking each
/// permutation from the reference sample to `x`.
///
/// Permutation `k` draws from the substream `(seed, k)`, so the result is
/// independent of evaluation order and reproducible.
pub fn sampled_shapley(
    model: &dyn Predictor,
    x: &[f64],
    x0: &ReferenceSample,
    class: usize,
    nu: u32,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    check_inputs(model, x, x0, class)?;
    if nu == 0 {
        return Err(ExplainError::InvalidParameter("nu must be >= 1".into()));
    }
    let n = x.len();
    let mut sums = vec![0.0f64; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut composed = vec![0.0f64; n];
    let mut probs = vec![0.0; model.n_classes()];

    for k in 0..nu {
        let mut rng = crate::rng::stream(seed, u64::from(k));
        perm.copy_from_slice(&(0..n).collect::<Vec<_>>());
        perm.shuffle(&mut rng);

        composed.copy_from_slice(&x0.values);
        model.predict_into(&composed, &mut probs);
        let mut previous = probs[class];
        for &feature in &perm {
            composed[feature] = x[feature];
            model.predict_into(&composed, &mut probs);
            sums[feature] += probs[class] - previous;
            previous = probs[class];
        }
    }

    let shapley = sums.iter().map(|s| s / f64::from(nu)).collect();
    Ok(Explanation {
        shapley,
        target_class: class,
        method: ExplainMethod::Sampled { nu },
        reference_id: x0.id.clone(),
        seed: Some(seed),
    })
}
