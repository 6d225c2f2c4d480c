//! MLP classifier: `[n, 2n, 2n, c]` by default, softmax head, trained by
//! mini-batch gradient descent on cross-entropy. Dropout after each hidden
//! layer is the model-side defense knob; it only acts during training.

use super::nn::{Activation, FeedForward, Init, OutputActivation};
use super::{Predictor, TrainError, TrainMeta};
use crate::data::Dataset;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Architecture of the classifier network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    /// Hidden layer widths; the input/output widths come from the data.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Dropout rate on hidden activations, training time only.
    pub dropout_rate: f64,
}

impl MlpArch {
    /// Two hidden layers of `2n` units, ReLU, no dropout.
    pub fn standard(n_inputs: usize) -> Self {
        Self {
            hidden: vec![2 * n_inputs, 2 * n_inputs],
            activation: Activation::Relu,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }
}

/// Optimizer settings for [`train_mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpHyper {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 64,
        }
    }
}

/// Trained MLP classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub net: FeedForward,
    /// Recorded for provenance; inference never applies dropout.
    pub dropout_rate: f64,
    pub train_meta: TrainMeta,
}

impl Predictor for MlpModel {
    fn n_inputs(&self) -> usize {
        self.net.n_inputs()
    }

    fn n_classes(&self) -> usize {
        self.net.n_outputs()
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let scores = self.net.forward(x);
        super::nn::softmax(&scores, out);
    }
}

/// Train an MLP on a normalized dataset. Deterministic in `seed`.
pub fn train_mlp(
    train: &Dataset,
    arch: &MlpArch,
    hyper: &MlpHyper,
    seed: u64,
) -> Result<MlpModel, TrainError> {
    if !(0.0..1.0).contains(&arch.dropout_rate) {
        return Err(TrainError::InvalidHyper(format!(
            "dropout_rate {} outside [0, 1)",
            arch.dropout_rate
        )));
    }
    if hyper.batch_size == 0 {
        return Err(TrainError::InvalidHyper("batch_size must be positive".into()));
    }
    if arch.hidden.iter().any(|&w| w == 0) {
        return Err(TrainError::InvalidHyper("zero-width hidden layer".into()));
    }

    let n = train.n_features();
    let c = train.n_classes;
    let mut widths = Vec::with_capacity(arch.hidden.len() + 2);
    widths.push(n);
    widths.extend_from_slice(&arch.hidden);
    widths.push(c);

    let mut rng = crate::rng::root(seed);
    let mut net = FeedForward::new(
        &widths,
        arch.activation,
        OutputActivation::Linear,
        Init::He,
        &mut rng,
    );

    let m = train.n_rows();
    let mut order: Vec<usize> = (0..m).collect();
    let mut grads = net.zero_gradients();
    let mut probs = vec![0.0; c];

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            grads.reset();
            for &row in batch {
                let cache = net.forward_cached(&train.features[row], arch.dropout_rate, &mut rng);
                super::nn::softmax(cache.output(), &mut probs);
                let label = train.labels[row];
                epoch_loss -= probs[label].max(1e-15).ln();
                // d(cross-entropy)/d(logits) = p - onehot(y)
                let mut delta = probs.clone();
                delta[label] -= 1.0;
                net.backward(&cache, delta, &mut grads);
            }
            net.apply_gradients(&grads, hyper.learning_rate / batch.len() as f64, 0.0);
        }
        epoch_loss /= m as f64;
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
    }

    let meta = TrainMeta::new(seed)
        .with("epochs", f64::from(hyper.epochs))
        .with("learning_rate", hyper.learning_rate)
        .with("batch_size", hyper.batch_size as f64)
        .with("dropout_rate", arch.dropout_rate);
    Ok(MlpModel {
        net,
        dropout_rate: arch.dropout_rate,
        train_meta: meta,
    })
}
