//! Adversary 1: learn an inverse mapping from Shapley vectors back to the
//! private inputs, trained on (explanation, input) pairs harvested from an
//! auxiliary dataset through the explanation service.

use crate::data::Dataset;
use crate::models::nn::{Activation, FeedForward, Init, OutputActivation};
use crate::models::{ModelIoError, StoredModel, TrainError, TrainMeta};
use crate::service::{BatchError, ExplainOracle};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("need at least {need} pairs, have {have}")]
    NotEnoughPairs { need: usize, have: usize },
    #[error("explanation width {got} does not match attack model width {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("query batch failed after {completed} explanations: {cause}")]
    Batch { completed: usize, cause: String },
}

/// Aligned (shapley, input) training pairs. Pairs whose Shapley vectors
/// collide exactly are removed on construction; an inverse map cannot
/// separate them.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub shapley: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// How many pairs the collision filter dropped.
    pub collisions_removed: usize,
}

impl PairSet {
    /// Build from aligned rows, removing every member of any group that
    /// shares an identical Shapley vector.
    pub fn new(shapley: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>) -> Self {
        assert_eq!(shapley.len(), inputs.len(), "pairs must be aligned");
        let mut counts: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
        for s in &shapley {
            *counts.entry(bits_of(s)).or_insert(0) += 1;
        }
        let mut kept_s = Vec::with_capacity(shapley.len());
        let mut kept_x = Vec::with_capacity(inputs.len());
        let mut removed = 0;
        for (s, x) in shapley.into_iter().zip(inputs) {
            if counts[&bits_of(&s)] == 1 {
                kept_s.push(s);
                kept_x.push(x);
            } else {
                removed += 1;
            }
        }
        Self {
            shapley: kept_s,
            inputs: kept_x,
            collisions_removed: removed,
        }
    }

    pub fn len(&self) -> usize {
        self.shapley.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapley.is_empty()
    }
}

fn bits_of(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Result of harvesting pairs from the service: the budget may run out
/// mid-batch, in which case the prefix is still usable.
#[derive(Debug)]
pub struct PairHarvest {
    pub pairs: PairSet,
    /// Present when the batch stopped early (e.g. budget exhausted).
    pub warning: Option<String>,
}

/// Query the service for every auxiliary row and align the released
/// explanations with the raw inputs. Withheld entries (top-k defense) are
/// filled with zero.
pub fn build_pairs(
    aux: &Dataset,
    oracle: &mut dyn ExplainOracle,
) -> Result<PairHarvest, AttackError> {
    let (served, warning) = match oracle.explain_batch(&aux.features) {
        Ok(served) => (served, None),
        Err(BatchError { completed, cause }) => {
            if completed.is_empty() {
                return Err(AttackError::Batch {
                    completed: 0,
                    cause: cause.to_string(),
                });
            }
            let warning = format!(
                "batch stopped after {} of {} rows: {cause}",
                completed.len(),
                aux.n_rows()
            );
            (completed, Some(warning))
        }
    };
    let shapley: Vec<Vec<f64>> = served.iter().map(|s| s.released.densify(0.0)).collect();
    let inputs: Vec<Vec<f64>> = aux.features[..shapley.len()].to_vec();
    Ok(PairHarvest {
        pairs: PairSet::new(shapley, inputs),
        warning,
    })
}

/// Optimizer settings for the inverse model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseHyper {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for InverseHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 1000,
            batch_size: 32,
            weight_decay: 1e-4,
        }
    }
}

/// The trained inverse model: `[n, 4n, n]`, sigmoid on the hidden and
/// output layers so reconstructions live in (0, 1)^n like the normalized
/// features they imitate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    pub net: FeedForward,
    pub train_meta: TrainMeta,
}

impl AttackModel {
    pub fn n_features(&self) -> usize {
        self.net.n_inputs()
    }

    /// Mean squared reconstruction error over a pair set.
    pub fn mse(&self, pairs: &PairSet) -> f64 {
        let mut total = 0.0;
        for (s, x) in pairs.shapley.iter().zip(&pairs.inputs) {
            let out = self.net.forward(s);
            total += out
                .iter()
                .zip(x)
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
                / x.len() as f64;
        }
        total / pairs.len() as f64
    }
}

/// Fit the inverse model by mini-batch gradient descent on squared
/// reconstruction error plus L2 weight decay. Deterministic in `seed`.
pub fn train_inverse(
    pairs: &PairSet,
    hyper: &InverseHyper,
    seed: u64,
) -> Result<AttackModel, AttackError> {
    if pairs.len() < 2 {
        return Err(AttackError::NotEnoughPairs {
            need: 2,
            have: pairs.len(),
        });
    }
    if hyper.batch_size == 0 {
        return Err(AttackError::Train(TrainError::InvalidHyper(
            "batch_size must be positive".into(),
        )));
    }
    let n_in = pairs.shapley[0].len();
    let n_out = pairs.inputs[0].len();
    let mut rng = crate::rng::root(seed);
    let mut net = FeedForward::new(
        &[n_in, 4 * n_out, n_out],
        Activation::Sigmoid,
        OutputActivation::Sigmoid,
        Init::ScaledNormal,
        &mut rng,
    );

    let m = pairs.len();
    let mut order: Vec<usize> = (0..m).collect();
    let mut grads = net.zero_gradients();

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            grads.reset();
            for &row in batch {
                let cache = net.forward_cached(&pairs.shapley[row], 0.0, &mut rng);
                let out = cache.output();
                let target = &pairs.inputs[row];
                epoch_loss += out
                    .iter()
                    .zip(target)
                    .map(|(o, t)| (o - t) * (o - t))
                    .sum::<f64>()
                    / target.len() as f64;
                // d(mse)/d(z_out) through the output sigmoid.
                let delta: Vec<f64> = out
                    .iter()
                    .zip(target)
                    .map(|(o, t)| 2.0 * (o - t) / target.len() as f64 * o * (1.0 - o))
                    .collect();
                net.backward(&cache, delta, &mut grads);
            }
            // The update steps on the batch-summed loss (the per-sample
            // losses accumulate), with L2 decay folded in per step.
            net.apply_gradients(
                &grads,
                hyper.learning_rate,
                hyper.learning_rate * hyper.weight_decay,
            );
        }
        epoch_loss /= m as f64;
        if !epoch_loss.is_finite() {
            return Err(AttackError::Train(TrainError::Diverged {
                epoch,
                loss: epoch_loss,
            }));
        }
    }

    let meta = TrainMeta::new(seed)
        .with("learning_rate", hyper.learning_rate)
        .with("epochs", f64::from(hyper.epochs))
        .with("batch_size", hyper.batch_size as f64)
        .with("weight_decay", hyper.weight_decay)
        .with("pairs", m as f64)
        .with("collisions_removed", pairs.collisions_removed as f64);
    Ok(AttackModel {
        net,
        train_meta: meta,
    })
}

/// Reconstruct a private input from its (complete) Shapley vector.
pub fn reconstruct(model: &AttackModel, shapley: &[f64]) -> Result<Vec<f64>, AttackError> {
    if shapley.len() != model.n_features() {
        return Err(AttackError::DimensionMismatch {
            expected: model.n_features(),
            got: shapley.len(),
        });
    }
    Ok(model.net.forward(shapley))
}

/// Persist in the shared model-file format under the `attack-mlp` kind.
pub fn save_attack_model(model: &AttackModel, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    crate::models::save_stored_model(
        &StoredModel::AttackMlp {
            net: model.net.clone(),
            train_meta: model.train_meta.clone(),
        },
        path,
    )
}

pub fn load_attack_model(path: impl AsRef<Path>) -> Result<AttackModel, ModelIoError> {
    match crate::models::load_stored_model(path)? {
        StoredModel::AttackMlp { net, train_meta } => Ok(AttackModel { net, train_meta }),
        other => Err(ModelIoError::KindMismatch {
            expected: "attack-mlp".into(),
            found: other.kind().to_string(),
        }),
    }
}
