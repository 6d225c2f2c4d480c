//! Random forest: bootstrap-sampled gini CART trees with per-node random
//! feature subsets. Prediction is the mean of per-tree class-indicator
//! votes, so it is always a distribution over classes.

use super::cart::{ClassTreeBuilder, Tree};
use super::{Predictor, TrainError, TrainMeta};
use crate::data::Dataset;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfHyper {
    pub n_trees: usize,
    pub max_depth: usize,
}

impl Default for RfHyper {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree<usize>>,
    pub n_inputs: usize,
    pub n_classes: usize,
    pub train_meta: TrainMeta,
}

impl Predictor for ForestModel {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for tree in &self.trees {
            out[tree.leaf_for(x)] += 1.0;
        }
        let total = self.trees.len() as f64;
        for v in out.iter_mut() {
            *v /= total;
        }
    }
}

/// Bootstrap row sample for tree `tree_index`: `m` draws with replacement
/// from the substream `(seed, tree_index)`. The tree builder continues on
/// the same stream for its feature subsets.
pub(crate) fn bootstrap_indices(rng: &mut impl Rng, m: usize) -> Vec<usize> {
    (0..m).map(|_| rng.gen_range(0..m)).collect()
}

/// Train a random forest. Deterministic in `seed`; trees use independent
/// seed substreams.
pub fn train_rf(train: &Dataset, hyper: &RfHyper, seed: u64) -> Result<ForestModel, TrainError> {
    if hyper.n_trees == 0 || hyper.max_depth == 0 {
        return Err(TrainError::InvalidHyper(
            "n_trees and max_depth must be positive".into(),
        ));
    }
    let m = train.n_rows();
    let n = train.n_features();
    let subset_size = (n as f64).sqrt().floor().max(1.0) as usize;
    let builder = ClassTreeBuilder {
        features: &train.features,
        labels: &train.labels,
        n_classes: train.n_classes,
        max_depth: hyper.max_depth,
    };

    let distinct_labels = {
        let mut seen = vec![false; train.n_classes];
        train.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };

    let trees = (0..hyper.n_trees)
        .map(|t| {
            let mut rng = crate::rng::stream(seed, t as u64);
            let rows = bootstrap_indices(&mut rng, m);
            builder.build(&rows, || {
                let mut picked: Vec<usize> =
                    (0..n).collect::<Vec<_>>().partial_shuffle(&mut rng, subset_size).0.to_vec();
                // Sorted so the tie-break "lowest feature index" is
                // meaningful regardless of draw order.
                picked.sort_unstable();
                picked
            })
        })
        .collect();

    let meta = TrainMeta::new(seed)
        .with("n_trees", hyper.n_trees as f64)
        .with("max_depth", hyper.max_depth as f64)
        .with("degenerate_single_class", f64::from(distinct_labels <= 1));
    Ok(ForestModel {
        trees,
        n_inputs: n,
        n_classes: train.n_classes,
        train_meta: meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{accuracy, test_util};

    #[test]
    fn single_stump_matches_exhaustive_search() {
        // One feature, one tree of depth 1; the split must match an
        // exhaustive stump search over the same bootstrap sample.
        let m = 40;
        let features: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64 / m as f64]).collect();
        let labels: Vec<usize> = (0..m).map(|i| usize::from(i >= 14)).collect();
        let d = Dataset::new(features.clone(), labels.clone(), vec!["f".into()], 2).unwrap();
        let seed = 21;
        let model = train_rf(
            &d,
            &RfHyper {
                n_trees: 1,
                max_depth: 1,
            },
            seed,
        )
        .unwrap();

        // Reproduce the bootstrap sample the trainer used.
        let mut rng = crate::rng::stream(seed, 0);
        let rows = bootstrap_indices(&mut rng, m);

        // Exhaustive oracle: try every midpoint threshold, score by exact
        // gini of the bootstrap sample, same tie-breaks.
        let mut values: Vec<f64> = rows.iter().map(|&r| features[r][0]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        let gini = |rows: &[usize]| -> f64 {
            if rows.is_empty() {
                return 0.0;
            }
            let ones = rows.iter().filter(|&&r| labels[r] == 1).count() as f64;
            let p = ones / rows.len() as f64;
            2.0 * p * (1.0 - p)
        };
        let mut best: Option<(f64, f64)> = None; // (gain, threshold)
        let parent = gini(&rows);
        for w in values.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let left: Vec<usize> = rows.iter().copied().filter(|&r| features[r][0] <= t).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&r| features[r][0] > t).collect();
            let weighted = left.len() as f64 / rows.len() as f64 * gini(&left)
                + right.len() as f64 / rows.len() as f64 * gini(&right);
            let gain = parent - weighted;
            if best.map_or(true, |(g, bt)| gain > g || (gain == g && t < bt)) {
                best = Some((gain, t));
            }
        }
        let (_, expected_threshold) = best.unwrap();
        match model.trees[0].nodes[0] {
            crate::models::cart::TreeNode::Split { threshold, .. } => {
                assert!(
                    (threshold - expected_threshold).abs() < 1e-12,
                    "trained {threshold}, oracle {expected_threshold}"
                );
            }
            _ => panic!("expected a root split"),
        }
    }

    #[test]
    fn all_identical_labels_give_certain_predictions() {
        let d = Dataset::new(
            (0..20).map(|i| vec![i as f64]).collect(),
            vec![1; 20],
            vec!["f".into()],
            3,
        )
        .unwrap();
        let model = train_rf(&d, &RfHyper::default(), 0).unwrap();
        assert_eq!(model.predict(&[0.4]), vec![0.0, 1.0, 0.0]);
        assert_eq!(model.train_meta.params["degenerate_single_class"], 1.0);
    }

    #[test]
    fn votes_normalize_to_one() {
        use rand::Rng;
        let d = test_util::xor_blobs(120, 3);
        let model = train_rf(&d, &RfHyper::default(), 1).unwrap();
        let mut rng = crate::rng::root(2);
        for _ in 0..100 {
            let p = model.predict(&[rng.gen(), rng.gen()]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn learns_blobs_and_is_deterministic() {
        let d = test_util::separable_blobs(150, 4);
        let a = train_rf(&d, &RfHyper::default(), 5).unwrap();
        let b = train_rf(&d, &RfHyper::default(), 5).unwrap();
        assert_eq!(a, b);
        assert!(accuracy(&a, &d) >= 0.95);
    }
}
