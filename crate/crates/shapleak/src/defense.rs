//! Explanation-side countermeasures applied before release: snapping
//! Shapley values to a coarse grid and withholding all but the top-k
//! highest-variance features. Dropout, the model-side defense, lives with
//! the MLP trainer.

use crate::explain::Explanation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("invalid quantization grid: {0}")]
    InvalidGrid(String),
    #[error("need at least {need} explanations, have {have}")]
    NotEnoughExplanations { need: usize, have: usize },
    #[error("feature index {index} out of range for {n} features")]
    IndexOutOfRange { index: usize, n: usize },
}

/// Which defenses a service applies to explanations before release.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    /// Snap each value to one of `k` grid points (5/10/20 in the standard
    /// sweeps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantize_levels: Option<u32>,
    /// Grid range; when absent the service calibrates it at startup from
    /// a batch of explanations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantize_range: Option<(f64, f64)>,
    /// Release only this many features, ranked by Shapley variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk: Option<usize>,
    /// Cached variance ranking; when absent the service computes it at
    /// startup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk_indices: Option<Vec<usize>>,
}

impl DefenseConfig {
    pub fn is_active(&self) -> bool {
        self.quantize_levels.is_some() || self.topk.is_some()
    }
}

/// Snap every Shapley value to the nearest of `levels` equally spaced grid
/// points spanning `[lo, hi]`; exact midpoints snap downward. Values
/// outside the range snap to the boundary points.
pub fn quantize(
    e: &Explanation,
    levels: u32,
    range: (f64, f64),
) -> Result<Explanation, DefenseError> {
    let (lo, hi) = range;
    if levels < 2 {
        return Err(DefenseError::InvalidGrid(format!(
            "need at least 2 levels, got {levels}"
        )));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(DefenseError::InvalidGrid(format!(
            "range [{lo}, {hi}] is not a valid interval"
        )));
    }
    let step = (hi - lo) / f64::from(levels - 1);
    let snapped = e
        .shapley
        .iter()
        .map(|&v| {
            let pos = (v - lo) / step;
            // ceil(pos - 0.5) rounds to nearest with ties going down.
            let idx = (pos - 0.5).ceil().clamp(0.0, f64::from(levels - 1));
            lo + idx * step
        })
        .collect();
    Ok(Explanation {
        shapley: snapped,
        ..e.clone()
    })
}

/// Feature indices sorted by descending per-feature variance of the
/// Shapley values across a set of explanations; ties break to the lower
/// index.
pub fn rank_by_shapley_variance(explanations: &[Explanation]) -> Result<Vec<usize>, DefenseError> {
    if explanations.len() < 2 {
        return Err(DefenseError::NotEnoughExplanations {
            need: 2,
            have: explanations.len(),
        });
    }
    let runs: Vec<Vec<f64>> = explanations.iter().map(|e| e.shapley.clone()).collect();
    let variances = crate::explain::variance_per_feature(&runs);
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| {
        variances[b]
            .partial_cmp(&variances[a])
            .expect("finite variances")
            .then(a.cmp(&b))
    });
    Ok(order)
}

/// An explanation with only some features released; absence is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasedExplanation {
    /// `(feature index, value)` pairs, ascending by index.
    pub entries: Vec<(usize, f64)>,
    /// Width of the full explanation this was cut from.
    pub n_features: usize,
    pub target_class: usize,
    pub method: crate::explain::ExplainMethod,
    pub reference_id: String,
}

impl ReleasedExplanation {
    /// Every feature of `e`, released as-is.
    pub fn full(e: &Explanation) -> Self {
        Self {
            entries: e.shapley.iter().copied().enumerate().collect(),
            n_features: e.shapley.len(),
            target_class: e.target_class,
            method: e.method,
            reference_id: e.reference_id.clone(),
        }
    }

    /// Dense vector with `fill` in the withheld slots.
    pub fn densify(&self, fill: f64) -> Vec<f64> {
        let mut out = vec![fill; self.n_features];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// Dense vector with `None` in the withheld slots.
    pub fn to_options(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n_features];
        for &(i, v) in &self.entries {
            out[i] = Some(v);
        }
        out
    }
}

/// Release only the features in `indices`; values pass through untouched.
pub fn apply_topk(
    e: &Explanation,
    indices: &[usize],
) -> Result<ReleasedExplanation, DefenseError> {
    let n = e.shapley.len();
    let mut sorted: Vec<usize> = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= n) {
        return Err(DefenseError::IndexOutOfRange { index: bad, n });
    }
    Ok(ReleasedExplanation {
        entries: sorted.into_iter().map(|i| (i, e.shapley[i])).collect(),
        n_features: n,
        target_class: e.target_class,
        method: e.method,
        reference_id: e.reference_id.clone(),
    })
}
