//! The four black-box model families used as attack targets, all trained
//! from scratch with deterministic seeded procedures: an MLP classifier,
//! random forest, gradient-boosted trees and an RBF-kernel SVM.
//!
//! Every model exposes the same [`Predictor`] surface: `predict` maps a
//! normalized feature vector in `[0, 1]^n` to a probability vector of
//! length `c` that sums to 1.

mod cart;
mod forest;
mod gbdt;
mod io;
mod ksvm;
mod mlp;
pub mod nn;
pub mod toy;

pub use forest::{train_rf, ForestModel, RfHyper};
pub use gbdt::{train_gbdt, GbdtHyper, GbdtModel};
pub use io::{
    load_model, load_model_of_kind, save_model, ModelIoError, StoredModel, MODEL_FORMAT,
    MODEL_VERSION,
};
pub use ksvm::{train_ksvm, KsvmHyper, KsvmModel};
pub use mlp::{train_mlp, MlpArch, MlpHyper, MlpModel};

/// Save any payload the model-file format supports (classifiers and the
/// inverse attack model).
pub fn save_stored_model(
    model: &StoredModel,
    path: impl AsRef<std::path::Path>,
) -> Result<(), ModelIoError> {
    io::save_stored(model, path)
}

pub fn load_stored_model(path: impl AsRef<std::path::Path>) -> Result<StoredModel, ModelIoError> {
    io::load_stored(path)
}

use crate::data::Dataset;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Anything that maps a feature vector to class probabilities. The
/// explanation engine and the attacks only ever see this surface.
pub trait Predictor {
    fn n_inputs(&self) -> usize;
    fn n_classes(&self) -> usize;

    /// Write class probabilities for `x` into `out`. `x` must hold
    /// `n_inputs()` values and `out` `n_classes()`.
    fn predict_into(&self, x: &[f64], out: &mut [f64]);

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes()];
        self.predict_into(x, &mut out);
        out
    }

    /// Length-checked prediction.
    fn try_predict(&self, x: &[f64]) -> Result<Vec<f64>, PredictError> {
        if x.len() != self.n_inputs() {
            return Err(PredictError::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(self.predict(x))
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).predict_into(x, out)
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Errors from the training procedures.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: u32, loss: f64 },
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyper(String),
    #[error("dataset unfit for training: {0}")]
    BadDataset(String),
}

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    RandomForest,
    Gbdt,
    Ksvm,
    AttackMlp,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Mlp => "mlp",
            ModelKind::RandomForest => "random-forest",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Ksvm => "ksvm",
            ModelKind::AttackMlp => "attack-mlp",
        };
        f.write_str(s)
    }
}

/// Seed and hyper-parameters a model was trained with; serialized into the
/// model file so every artifact carries its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
}

impl TrainMeta {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_owned(), value);
        self
    }
}

/// A trained black-box classifier of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    Mlp(MlpModel),
    RandomForest(ForestModel),
    Gbdt(GbdtModel),
    Ksvm(KsvmModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mlp(_) => ModelKind::Mlp,
            Model::RandomForest(_) => ModelKind::RandomForest,
            Model::Gbdt(_) => ModelKind::Gbdt,
            Model::Ksvm(_) => ModelKind::Ksvm,
        }
    }

    pub fn train_meta(&self) -> &TrainMeta {
        match self {
            Model::Mlp(m) => &m.train_meta,
            Model::RandomForest(m) => &m.train_meta,
            Model::Gbdt(m) => &m.train_meta,
            Model::Ksvm(m) => &m.train_meta,
        }
    }
}

impl Predictor for Model {
    fn n_inputs(&self) -> usize {
        match self {
            Model::Mlp(m) => m.n_inputs(),
            Model::RandomForest(m) => m.n_inputs(),
            Model::Gbdt(m) => m.n_inputs(),
            Model::Ksvm(m) => m.n_inputs(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Model::Mlp(m) => m.n_classes(),
            Model::RandomForest(m) => m.n_classes(),
            Model::Gbdt(m) => m.n_classes(),
            Model::Ksvm(m) => m.n_classes(),
        }
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Model::Mlp(m) => m.predict_into(x, out),
            Model::RandomForest(m) => m.predict_into(x, out),
            Model::Gbdt(m) => m.predict_into(x, out),
            Model::Ksvm(m) => m.predict_into(x, out),
        }
    }
}

/// Fraction of rows whose top predicted class matches the label.
pub fn accuracy(model: &impl Predictor, d: &Dataset) -> f64 {
    let mut out = vec![0.0; model.n_classes()];
    let hits = d
        .features
        .iter()
        .zip(&d.labels)
        .filter(|(x, &y)| {
            model.predict_into(x, &mut out);
            argmax(&out) == y
        })
        .count();
    hits as f64 / d.n_rows() as f64
}

/// Mean cross-entropy of the model on a dataset.
pub fn log_loss(model: &impl Predictor, d: &Dataset) -> f64 {
    let mut out = vec![0.0; model.n_classes()];
    let total: f64 = d
        .features
        .iter()
        .zip(&d.labels)
        .map(|(x, &y)| {
            model.predict_into(x, &mut out);
            -(out[y].max(1e-15)).ln()
        })
        .sum();
    total / d.n_rows() as f64
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod test_util {
    use crate::data::Dataset;

    /// Two linearly separable blobs in 2D.
    pub fn separable_blobs(m: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = crate::rng::root(seed);
        let mut features = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let class = i % 2;
            let center = if class == 0 { 0.25 } else { 0.75 };
            features.push(vec![
                (center + 0.08 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0),
                (center + 0.08 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0),
            ]);
            labels.push(class);
        }
        Dataset::new(features, labels, vec!["x".into(), "y".into()], 2).unwrap()
    }

    /// XOR pattern: four corner blobs, diagonal corners share a class.
    pub fn xor_blobs(m: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = crate::rng::root(seed);
        let corners = [
            ([0.2, 0.2], 0),
            ([0.8, 0.8], 0),
            ([0.2, 0.8], 1),
            ([0.8, 0.2], 1),
        ];
        let mut features = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let (c, class) = corners[i % 4];
            features.push(vec![
                (c[0] + 0.1 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0),
                (c[1] + 0.1 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0),
            ]);
            labels.push(class);
        }
        Dataset::new(features, labels, vec!["x".into(), "y".into()], 2).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }
}
