//! Gradient-boosted trees: one-vs-all regression trees fit to softmax
//! residuals with Newton leaf values, scores initialized at the class
//! log-priors. Prediction is the softmax of the accumulated scores.

use super::cart::{RegTreeBuilder, Tree};
use super::nn::softmax;
use super::{Predictor, TrainError, TrainMeta};
use crate::data::Dataset;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
}

impl Default for GbdtHyper {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            shrinkage: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    /// Class log-priors the scores start from.
    pub init_scores: Vec<f64>,
    /// `rounds x classes` trees; leaf values already carry the shrinkage.
    pub trees: Vec<Vec<Tree<f64>>>,
    pub n_inputs: usize,
    pub n_classes: usize,
    pub train_meta: TrainMeta,
}

impl GbdtModel {
    fn scores_into(&self, x: &[f64], scores: &mut [f64]) {
        scores.copy_from_slice(&self.init_scores);
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                scores[k] += tree.leaf_for(x);
            }
        }
    }
}

impl Predictor for GbdtModel {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let mut scores = vec![0.0; self.n_classes];
        self.scores_into(x, &mut scores);
        softmax(&scores, out);
    }
}

/// Train a boosted ensemble. The procedure is fully deterministic (no row
/// or feature sampling); `seed` is recorded for provenance only.
pub fn train_gbdt(train: &Dataset, hyper: &GbdtHyper, seed: u64) -> Result<GbdtModel, TrainError> {
    if hyper.max_depth == 0 {
        return Err(TrainError::InvalidHyper("max_depth must be positive".into()));
    }
    if !(0.0..=1.0).contains(&hyper.shrinkage) {
        return Err(TrainError::InvalidHyper(format!(
            "shrinkage {} outside [0, 1]",
            hyper.shrinkage
        )));
    }
    let m = train.n_rows();
    let c = train.n_classes;

    let mut prior = vec![0.0f64; c];
    for &l in &train.labels {
        prior[l] += 1.0;
    }
    let init_scores: Vec<f64> = prior
        .iter()
        .map(|&count| (count / m as f64).max(1e-12).ln())
        .collect();

    let mut scores: Vec<Vec<f64>> = vec![init_scores.clone(); m];
    let rows: Vec<usize> = (0..m).collect();
    let mut trees = Vec::with_capacity(hyper.n_trees);
    let mut probs = vec![0.0; c];

    for _round in 0..hyper.n_trees {
        let mut round_trees = Vec::with_capacity(c);
        // Residuals against the scores accumulated so far; all classes in
        // a round see the same baseline.
        let mut grad_per_class: Vec<Vec<f64>> = vec![vec![0.0; m]; c];
        let mut hess_per_class: Vec<Vec<f64>> = vec![vec![0.0; m]; c];
        for (i, score) in scores.iter().enumerate() {
            softmax(score, &mut probs);
            for k in 0..c {
                let y = f64::from(train.labels[i] == k);
                grad_per_class[k][i] = y - probs[k];
                hess_per_class[k][i] = (probs[k] * (1.0 - probs[k])).max(1e-12);
            }
        }
        for k in 0..c {
            let tree = RegTreeBuilder {
                features: &train.features,
                gradients: &grad_per_class[k],
                hessians: &hess_per_class[k],
                max_depth: hyper.max_depth,
                leaf_scale: hyper.shrinkage,
            }
            .build(&rows);
            for (i, score) in scores.iter_mut().enumerate() {
                score[k] += tree.leaf_for(&train.features[i]);
            }
            round_trees.push(tree);
        }
        trees.push(round_trees);
    }

    let meta = TrainMeta::new(seed)
        .with("n_trees", hyper.n_trees as f64)
        .with("max_depth", hyper.max_depth as f64)
        .with("shrinkage", hyper.shrinkage);
    Ok(GbdtModel {
        init_scores,
        trees,
        n_inputs: train.n_features(),
        n_classes: c,
        train_meta: meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_util;

    fn step_dataset() -> Dataset {
        let features: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 8)).collect();
        Dataset::new(features, labels, vec!["f".into()], 2).unwrap()
    }

    #[test]
    fn first_boosting_step_matches_closed_form() {
        // One round, depth 1, two classes. The stump must split where the
        // labels flip, and the leaf values must equal the Newton step
        // shrinkage * sum(y_k - p_k) / sum(p_k (1 - p_k)) on each side.
        let d = step_dataset();
        let hyper = GbdtHyper {
            n_trees: 1,
            max_depth: 1,
            shrinkage: 0.1,
        };
        let model = train_gbdt(&d, &hyper, 0).unwrap();

        let p1 = 12.0 / 20.0; // prior of class 1
        // Left side: rows 0..8 (labels 0); class-1 residual is -p1 each.
        let newton_left = 0.1 * (8.0 * -p1) / (8.0 * p1 * (1.0 - p1));
        let newton_right = 0.1 * (12.0 * (1.0 - p1)) / (12.0 * p1 * (1.0 - p1));
        let tree = &model.trees[0][1];
        let left = tree.leaf_for(&[0.1]);
        let right = tree.leaf_for(&[0.9]);
        assert!((left - newton_left).abs() < 1e-6, "{left} vs {newton_left}");
        assert!(
            (right - newton_right).abs() < 1e-6,
            "{right} vs {newton_right}"
        );
        match tree.nodes[0] {
            crate::models::cart::TreeNode::Split { threshold, .. } => {
                let expected = (7.0 / 20.0 + 8.0 / 20.0) / 2.0;
                assert!((threshold - expected).abs() < 1e-12);
            }
            _ => panic!("expected root split"),
        }
    }

    #[test]
    fn zero_shrinkage_returns_the_prior() {
        let d = step_dataset();
        let hyper = GbdtHyper {
            n_trees: 10,
            max_depth: 3,
            shrinkage: 0.0,
        };
        let model = train_gbdt(&d, &hyper, 0).unwrap();
        let p = model.predict(&[0.3]);
        assert!((p[0] - 0.4).abs() < 1e-9);
        assert!((p[1] - 0.6).abs() < 1e-9);
    }

    #[test]
    fn training_log_loss_never_increases_with_more_trees() {
        let d = test_util::xor_blobs(80, 2);
        let mut previous = f64::INFINITY;
        for n_trees in [1, 5, 20, 60] {
            let model = train_gbdt(
                &d,
                &GbdtHyper {
                    n_trees,
                    ..GbdtHyper::default()
                },
                0,
            )
            .unwrap();
            let loss = crate::models::log_loss(&model, &d);
            assert!(
                loss <= previous + 1e-9,
                "loss rose from {previous} to {loss} at {n_trees} trees"
            );
            previous = loss;
        }
    }

    #[test]
    fn predictions_form_a_distribution() {
        use rand::Rng;
        let d = test_util::xor_blobs(80, 1);
        let model = train_gbdt(&d, &GbdtHyper::default(), 0).unwrap();
        let mut rng = crate::rng::root(3);
        for _ in 0..100 {
            let p = model.predict(&[rng.gen(), rng.gen()]);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
