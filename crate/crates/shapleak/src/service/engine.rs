//! The explanation engine behind the service: prediction, target-class
//! policy, per-request seed derivation and defense application. The server
//! adds budgets and replay on top; in-process callers can drive the engine
//! directly and get bit-identical answers for identical request ids.

use crate::defense::{apply_topk, quantize, rank_by_shapley_variance, DefenseConfig,
    ReleasedExplanation};
use crate::explain::{exact_shapley, sampled_shapley, ExplainMethod, Explanation,
    ReferenceSample, MAX_EXACT_FEATURES};
use crate::models::{argmax, Predictor};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("internal: {0}")]
    Internal(String),
}

/// How the served explanation is computed. The sampled variant carries the
/// service seed; each request derives its own stream from
/// `seed ^ fnv1a(request_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MethodSpec {
    Exact,
    Sampled { nu: u32, seed: u64 },
}

impl MethodSpec {
    pub fn as_explain_method(&self) -> ExplainMethod {
        match *self {
            MethodSpec::Exact => ExplainMethod::Exact,
            MethodSpec::Sampled { nu, .. } => ExplainMethod::Sampled { nu },
        }
    }
}

/// Which class the released explanation targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum TargetClassPolicy {
    Fixed { class: usize },
    TopPredicted,
}

/// Number of random calibration inputs used to resolve defense settings.
pub const CALIBRATION_BATCH: usize = 256;

/// Defense settings with every derived quantity resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedDefense {
    pub quantize: Option<(u32, (f64, f64))>,
    pub topk: Option<Vec<usize>>,
}

pub struct ExplainEngine {
    model: Arc<dyn Predictor + Send + Sync>,
    method: MethodSpec,
    reference: ReferenceSample,
    policy: TargetClassPolicy,
    defense: ResolvedDefense,
}

/// One answered explain request, before budget bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub prediction: Vec<f64>,
    pub target_class: usize,
    pub released: ReleasedExplanation,
}

impl ExplainEngine {
    /// Build an engine, resolving defense calibration if the config needs
    /// it: missing quantization ranges and top-k rankings are derived from
    /// explanations of [`CALIBRATION_BATCH`] seeded uniform inputs.
    pub fn new(
        model: Arc<dyn Predictor + Send + Sync>,
        method: MethodSpec,
        reference: ReferenceSample,
        policy: TargetClassPolicy,
        defense: &DefenseConfig,
        calibration_seed: u64,
    ) -> Result<Self, EngineError> {
        let n = model.n_inputs();
        if reference.values.len() != n {
            return Err(EngineError::BadRequest(format!(
                "reference sample has {} values, model expects {n}",
                reference.values.len()
            )));
        }
        if matches!(method, MethodSpec::Exact) && n > MAX_EXACT_FEATURES {
            return Err(EngineError::BadRequest(format!(
                "exact method needs n <= {MAX_EXACT_FEATURES}, model has {n} features"
            )));
        }
        if let TargetClassPolicy::Fixed { class } = policy {
            if class >= model.n_classes() {
                return Err(EngineError::BadRequest(format!(
                    "fixed target class {class} out of range"
                )));
            }
        }
        if let Some(k) = defense.topk {
            if k > n {
                return Err(EngineError::BadRequest(format!(
                    "top-k {k} exceeds feature count {n}"
                )));
            }
        }

        let mut engine = Self {
            model,
            method,
            reference,
            policy,
            defense: ResolvedDefense {
                quantize: None,
                topk: None,
            },
        };

        let needs_range = defense.quantize_levels.is_some() && defense.quantize_range.is_none();
        let needs_ranking = defense.topk.is_some() && defense.topk_indices.is_none();
        let calibration = if needs_range || needs_ranking {
            engine.calibration_explanations(calibration_seed)?
        } else {
            Vec::new()
        };

        if let Some(levels) = defense.quantize_levels {
            let range = match defense.quantize_range {
                Some(r) => r,
                None => {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for e in &calibration {
                        for &v in &e.shapley {
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    if !(lo < hi) {
                        // Degenerate calibration (constant explanations);
                        // fall back to a unit grid around the value.
                        (lo - 0.5, lo + 0.5)
                    } else {
                        (lo, hi)
                    }
                }
            };
            if !(range.0 < range.1) {
                return Err(EngineError::BadRequest(format!(
                    "quantization range [{}, {}] is empty",
                    range.0, range.1
                )));
            }
            engine.defense.quantize = Some((levels, range));
        }

        if let Some(k) = defense.topk {
            let indices = match &defense.topk_indices {
                Some(idx) => {
                    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                        return Err(EngineError::BadRequest(format!(
                            "top-k index {bad} out of range"
                        )));
                    }
                    idx.clone()
                }
                None => rank_by_shapley_variance(&calibration)
                    .map_err(|e| EngineError::Internal(e.to_string()))?,
            };
            engine.defense.topk = Some(indices.into_iter().take(k).collect());
        }

        Ok(engine)
    }

    /// Explanations of the seeded calibration batch, via the normal
    /// request path so they reflect what the service would release.
    fn calibration_explanations(&self, seed: u64) -> Result<Vec<Explanation>, EngineError> {
        let n = self.model.n_inputs();
        let mut rng = crate::rng::stream(seed, u64::from(u32::MAX));
        (0..CALIBRATION_BATCH)
            .map(|i| {
                let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                self.raw_explanation(&format!("calibrate:{i}"), &x)
                    .map(|(_, _, e)| e)
            })
            .collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.model.n_inputs()
    }

    pub fn n_classes(&self) -> usize {
        self.model.n_classes()
    }

    pub fn method(&self) -> MethodSpec {
        self.method
    }

    pub fn resolved_defense(&self) -> &ResolvedDefense {
        &self.defense
    }

    fn raw_explanation(
        &self,
        request_id: &str,
        features: &[f64],
    ) -> Result<(Vec<f64>, usize, Explanation), EngineError> {
        if features.len() != self.model.n_inputs() {
            return Err(EngineError::BadRequest(format!(
                "expected {} features, got {}",
                self.model.n_inputs(),
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::BadRequest("non-finite feature value".into()));
        }
        let prediction = self.model.predict(features);
        let class = match self.policy {
            TargetClassPolicy::Fixed { class } => class,
            TargetClassPolicy::TopPredicted => argmax(&prediction),
        };
        let explanation = match self.method {
            MethodSpec::Exact => exact_shapley(&*self.model, features, &self.reference, class),
            MethodSpec::Sampled { nu, seed } => sampled_shapley(
                &*self.model,
                features,
                &self.reference,
                class,
                nu,
                crate::rng::request_seed(seed, request_id),
            ),
        }
        .map_err(|e| EngineError::Internal(e.to_string()))?;
        Ok((prediction, class, explanation))
    }

    /// Answer one explain request. Deterministic: the same request id and
    /// features always produce the same answer.
    pub fn answer(&self, request_id: &str, features: &[f64]) -> Result<Answer, EngineError> {
        let (prediction, class, mut explanation) = self.raw_explanation(request_id, features)?;
        if let Some((levels, range)) = self.defense.quantize {
            explanation = quantize(&explanation, levels, range)
                .map_err(|e| EngineError::Internal(e.to_string()))?;
        }
        let released = match &self.defense.topk {
            Some(indices) => apply_topk(&explanation, indices)
                .map_err(|e| EngineError::Internal(e.to_string()))?,
            None => ReleasedExplanation::full(&explanation),
        };
        Ok(Answer {
            prediction,
            target_class: class,
            released,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::LinearProbModel;

    fn toy_engine(defense: &DefenseConfig) -> ExplainEngine {
        let model = LinearProbModel {
            weights: vec![0.3, -0.2, 0.1],
            bias: 0.4,
        };
        ExplainEngine::new(
            Arc::new(model),
            MethodSpec::Sampled { nu: 20, seed: 99 },
            ReferenceSample {
                values: vec![0.5, 0.5, 0.5],
                id: "ref".into(),
            },
            TargetClassPolicy::TopPredicted,
            defense,
            0,
        )
        .unwrap()
    }

    #[test]
    fn same_request_id_is_bit_identical() {
        let engine = toy_engine(&DefenseConfig::default());
        let a = engine.answer("q1", &[0.9, 0.1, 0.5]).unwrap();
        let b = engine.answer("q1", &[0.9, 0.1, 0.5]).unwrap();
        assert_eq!(a, b);
        let c = engine.answer("q2", &[0.9, 0.1, 0.5]).unwrap();
        assert_eq!(a.prediction, c.prediction);
        // Different id, different sampling stream.
        assert_ne!(
            a.released.entries, c.released.entries,
            "distinct request ids should resample"
        );
    }

    #[test]
    fn quantized_release_is_on_grid() {
        let engine = toy_engine(&DefenseConfig {
            quantize_levels: Some(5),
            quantize_range: Some((-1.0, 1.0)),
            ..DefenseConfig::default()
        });
        let answer = engine.answer("q", &[0.8, 0.2, 0.6]).unwrap();
        for (_, v) in answer.released.entries {
            let pos = (v + 1.0) / 0.5;
            assert!((pos - pos.round()).abs() < 1e-12, "{v} is off-grid");
        }
    }

    #[test]
    fn topk_release_has_exactly_k_entries() {
        let engine = toy_engine(&DefenseConfig {
            topk: Some(2),
            ..DefenseConfig::default()
        });
        let answer = engine.answer("q", &[0.8, 0.2, 0.6]).unwrap();
        assert_eq!(answer.released.entries.len(), 2);
        assert_eq!(answer.released.n_features, 3);
    }

    #[test]
    fn calibrated_topk_prefers_high_variance_features() {
        // Weight magnitudes 0.3 > 0.2 > 0.1 drive Shapley variance.
        let engine = toy_engine(&DefenseConfig {
            topk: Some(2),
            ..DefenseConfig::default()
        });
        let indices: Vec<usize> = engine
            .resolved_defense()
            .topk
            .clone()
            .unwrap();
        assert_eq!(indices, vec![0, 1]);
    }

    #[test]
    fn bad_width_is_a_bad_request() {
        let engine = toy_engine(&DefenseConfig::default());
        assert!(matches!(
            engine.answer("q", &[0.1, 0.2]),
            Err(EngineError::BadRequest(_))
        ));
    }
}
