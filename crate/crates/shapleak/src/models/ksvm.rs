//! Kernel SVM: RBF features over a seeded support subsample, one-vs-rest
//! hinge loss with L2 regularization trained by mini-batch subgradient
//! descent. Raw per-class scores are calibrated to probabilities with a
//! softmax.

use super::nn::softmax;
use super::{Predictor, TrainError, TrainMeta};
use crate::data::Dataset;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsvmHyper {
    /// RBF width: `k(x, z) = exp(-gamma * ||x - z||^2)`.
    pub gamma: f64,
    /// L2 coefficient on the dual-style weights.
    pub regularization: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Upper bound on the support subsample size.
    pub max_support: usize,
}

impl Default for KsvmHyper {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            regularization: 1e-3,
            epochs: 150,
            batch_size: 32,
            learning_rate: 0.1,
            max_support: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsvmModel {
    /// Support points the kernel features are computed against.
    pub support: Vec<Vec<f64>>,
    /// Per-class weights over the support points, `c x |support|`.
    pub alpha: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub gamma: f64,
    pub n_inputs: usize,
    pub n_classes: usize,
    pub train_meta: TrainMeta,
}

impl KsvmModel {
    fn kernel_features(&self, x: &[f64]) -> Vec<f64> {
        self.support
            .iter()
            .map(|z| rbf(x, z, self.gamma))
            .collect()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let phi = self.kernel_features(x);
        self.alpha
            .iter()
            .zip(&self.bias)
            .map(|(a, &b)| b + a.iter().zip(&phi).map(|(w, k)| w * k).sum::<f64>())
            .collect()
    }
}

impl Predictor for KsvmModel {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        softmax(&self.scores(x), out);
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * sq).exp()
}

/// Train the kernel machine. Deterministic in `seed`.
pub fn train_ksvm(train: &Dataset, hyper: &KsvmHyper, seed: u64) -> Result<KsvmModel, TrainError> {
    if hyper.gamma < 0.0 || !hyper.gamma.is_finite() {
        return Err(TrainError::InvalidHyper("gamma must be finite and >= 0".into()));
    }
    if hyper.batch_size == 0 || hyper.max_support == 0 {
        return Err(TrainError::InvalidHyper(
            "batch_size and max_support must be positive".into(),
        ));
    }
    let m = train.n_rows();
    let c = train.n_classes;
    let mut rng = crate::rng::root(seed);

    let mut candidates: Vec<usize> = (0..m).collect();
    candidates.shuffle(&mut rng);
    candidates.truncate(hyper.max_support);
    candidates.sort_unstable();
    let support: Vec<Vec<f64>> = candidates
        .iter()
        .map(|&i| train.features[i].clone())
        .collect();
    let s = support.len();

    // Kernel features of every training row against the support set.
    let phi: Vec<Vec<f64>> = train
        .features
        .iter()
        .map(|x| support.iter().map(|z| rbf(x, z, hyper.gamma)).collect())
        .collect();

    let mut alpha = vec![vec![0.0f64; s]; c];
    let mut bias = vec![0.0f64; c];
    let mut order: Vec<usize> = (0..m).collect();

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let scale = hyper.learning_rate / batch.len() as f64;
            for k in 0..c {
                let mut grad = vec![0.0f64; s];
                let mut grad_b = 0.0;
                for &i in batch {
                    let y = if train.labels[i] == k { 1.0 } else { -1.0 };
                    let score: f64 = bias[k]
                        + alpha[k].iter().zip(&phi[i]).map(|(a, p)| a * p).sum::<f64>();
                    if y * score < 1.0 {
                        for (g, &p) in grad.iter_mut().zip(&phi[i]) {
                            *g -= y * p;
                        }
                        grad_b -= y;
                    }
                }
                for (a, &g) in alpha[k].iter_mut().zip(&grad) {
                    *a -= scale * g + hyper.learning_rate * hyper.regularization * *a;
                }
                bias[k] -= scale * grad_b;
            }
        }
        let check: f64 = alpha.iter().flatten().sum();
        if !check.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: check,
            });
        }
    }

    let meta = TrainMeta::new(seed)
        .with("gamma", hyper.gamma)
        .with("regularization", hyper.regularization)
        .with("epochs", f64::from(hyper.epochs))
        .with("batch_size", hyper.batch_size as f64)
        .with("learning_rate", hyper.learning_rate)
        .with("support_size", s as f64);
    Ok(KsvmModel {
        support,
        alpha,
        bias,
        gamma: hyper.gamma,
        n_inputs: train.n_features(),
        n_classes: c,
        train_meta: meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{accuracy, test_util};

    /// Plain perceptron baseline used as the linear-separability oracle.
    fn linear_baseline_accuracy(d: &Dataset) -> f64 {
        let n = d.n_features();
        let mut w = vec![0.0f64; n];
        let mut b = 0.0;
        for _ in 0..200 {
            for (x, &label) in d.features.iter().zip(&d.labels) {
                let y = if label == 1 { 1.0 } else { -1.0 };
                let s: f64 = b + w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                if y * s <= 0.0 {
                    for (w, &v) in w.iter_mut().zip(x) {
                        *w += 0.1 * y * v;
                    }
                    b += 0.1 * y;
                }
            }
        }
        let hits = d
            .features
            .iter()
            .zip(&d.labels)
            .filter(|(x, &label)| {
                let s: f64 = b + w.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>();
                (s > 0.0) == (label == 1)
            })
            .count();
        hits as f64 / d.n_rows() as f64
    }

    #[test]
    fn kernel_separates_xor_where_linear_cannot() {
        let d = test_util::xor_blobs(200, 7);
        let model = train_ksvm(&d, &KsvmHyper::default(), 0).unwrap();
        let acc = accuracy(&model, &d);
        let linear = linear_baseline_accuracy(&d);
        assert!(acc >= 0.9, "kernel accuracy {acc}");
        assert!(linear <= 0.6, "linear baseline {linear}");
    }

    #[test]
    fn zero_gamma_collapses_to_a_constant_predictor() {
        let d = test_util::separable_blobs(100, 1);
        let hyper = KsvmHyper {
            gamma: 0.0,
            ..KsvmHyper::default()
        };
        let model = train_ksvm(&d, &hyper, 0).unwrap();
        let a = model.predict(&[0.0, 0.0]);
        let b = model.predict(&[1.0, 1.0]);
        assert_eq!(a, b, "gamma = 0 must ignore the input");
    }

    #[test]
    fn predictions_form_a_distribution() {
        use rand::Rng;
        let d = test_util::xor_blobs(120, 2);
        let model = train_ksvm(&d, &KsvmHyper::default(), 3).unwrap();
        let mut rng = crate::rng::root(4);
        for _ in 0..100 {
            let p = model.predict(&[rng.gen(), rng.gen()]);
            assert!(p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let d = test_util::xor_blobs(60, 2);
        let hyper = KsvmHyper {
            epochs: 20,
            ..KsvmHyper::default()
        };
        let a = train_ksvm(&d, &hyper, 9).unwrap();
        let b = train_ksvm(&d, &hyper, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn support_respects_the_cap() {
        let d = test_util::separable_blobs(300, 3);
        let hyper = KsvmHyper {
            max_support: 50,
            epochs: 5,
            ..KsvmHyper::default()
        };
        let model = train_ksvm(&d, &hyper, 0).unwrap();
        assert_eq!(model.support.len(), 50);
    }
}
