//! CART trees: gini-split classification trees for the forest and
//! variance-split regression trees for boosting.
//!
//! Determinism contract: split candidates are midpoints between distinct
//! sorted values; on exactly equal gain the lower feature index wins, then
//! the lower threshold.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TreeNode<L> {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(L),
}

/// A binary decision tree with leaf payload `L`. `x[feature] <= threshold`
/// goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<TreeNode<L>>,
}

impl<L: Copy> Tree<L> {
    pub fn leaf_for(&self, x: &[f64]) -> L {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }
}

/// Best split of `rows` on one feature, by impurity/variance gain.
#[derive(Debug, Clone, Copy)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn better(a: &SplitCandidate, b: &SplitCandidate) -> bool {
    // Strictly larger gain wins; exact ties go to the lower feature index,
    // then the lower threshold.
    if a.gain != b.gain {
        return a.gain > b.gain;
    }
    if a.feature != b.feature {
        return a.feature < b.feature;
    }
    a.threshold < b.threshold
}

/// Builder for gini classification trees.
pub struct ClassTreeBuilder<'a> {
    pub features: &'a [Vec<f64>],
    pub labels: &'a [usize],
    pub n_classes: usize,
    pub max_depth: usize,
}

impl ClassTreeBuilder<'_> {
    /// Grow a tree over `rows`, restricting each split to the feature
    /// subset returned by `feature_picker` (called once per node).
    pub fn build(
        &self,
        rows: &[usize],
        mut feature_picker: impl FnMut() -> Vec<usize>,
    ) -> Tree<usize> {
        let mut nodes = Vec::new();
        self.grow(rows, 0, &mut nodes, &mut feature_picker);
        Tree { nodes }
    }

    fn grow(
        &self,
        rows: &[usize],
        depth: usize,
        nodes: &mut Vec<TreeNode<usize>>,
        feature_picker: &mut impl FnMut() -> Vec<usize>,
    ) -> u32 {
        let counts = self.class_counts(rows);
        let majority = argmax_count(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || pure || rows.len() < 2 {
            nodes.push(TreeNode::Leaf(majority));
            return (nodes.len() - 1) as u32;
        }
        let candidates = feature_picker();
        let best = self.best_split(rows, &candidates, &counts);
        let Some(split) = best else {
            nodes.push(TreeNode::Leaf(majority));
            return (nodes.len() - 1) as u32;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.features[r][split.feature] <= split.threshold);
        let index = nodes.len();
        nodes.push(TreeNode::Leaf(majority)); // placeholder
        let left = self.grow(&left_rows, depth + 1, nodes, feature_picker);
        let right = self.grow(&right_rows, depth + 1, nodes, feature_picker);
        nodes[index] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        index as u32
    }

    fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &r in rows {
            counts[self.labels[r]] += 1;
        }
        counts
    }

    fn best_split(
        &self,
        rows: &[usize],
        features: &[usize],
        parent_counts: &[usize],
    ) -> Option<SplitCandidate> {
        let m = rows.len() as f64;
        let parent_gini = gini(parent_counts, rows.len());
        let mut best: Option<SplitCandidate> = None;
        for &f in features {
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by(|&a, &b| {
                self.features[a][f]
                    .partial_cmp(&self.features[b][f])
                    .expect("finite feature values")
            });
            let mut left_counts = vec![0usize; self.n_classes];
            let mut n_left = 0usize;
            for i in 0..order.len() - 1 {
                left_counts[self.labels[order[i]]] += 1;
                n_left += 1;
                let v = self.features[order[i]][f];
                let next = self.features[order[i + 1]][f];
                if v == next {
                    continue;
                }
                let right_counts: Vec<usize> = parent_counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(&p, &l)| p - l)
                    .collect();
                let n_right = rows.len() - n_left;
                let weighted = (n_left as f64 / m) * gini(&left_counts, n_left)
                    + (n_right as f64 / m) * gini(&right_counts, n_right);
                let candidate = SplitCandidate {
                    feature: f,
                    threshold: midpoint(v, next),
                    gain: parent_gini - weighted,
                };
                if candidate.gain > 0.0 && best.as_ref().map_or(true, |b| better(&candidate, b)) {
                    best = Some(candidate);
                }
            }
        }
        best
    }
}

/// Builder for regression trees on gradient/hessian pairs; leaves hold the
/// Newton value `sum(g) / (sum(h) + eps)` scaled by `leaf_scale`.
pub struct RegTreeBuilder<'a> {
    pub features: &'a [Vec<f64>],
    pub gradients: &'a [f64],
    pub hessians: &'a [f64],
    pub max_depth: usize,
    pub leaf_scale: f64,
}

const HESSIAN_EPS: f64 = 1e-9;

impl RegTreeBuilder<'_> {
    pub fn build(&self, rows: &[usize]) -> Tree<f64> {
        let mut nodes = Vec::new();
        self.grow(rows, 0, &mut nodes);
        Tree { nodes }
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&r| self.gradients[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hessians[r]).sum();
        self.leaf_scale * g / (h + HESSIAN_EPS)
    }

    fn grow(&self, rows: &[usize], depth: usize, nodes: &mut Vec<TreeNode<f64>>) -> u32 {
        if depth >= self.max_depth || rows.len() < 2 {
            nodes.push(TreeNode::Leaf(self.leaf_value(rows)));
            return (nodes.len() - 1) as u32;
        }
        let Some(split) = self.best_split(rows) else {
            nodes.push(TreeNode::Leaf(self.leaf_value(rows)));
            return (nodes.len() - 1) as u32;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.features[r][split.feature] <= split.threshold);
        let index = nodes.len();
        nodes.push(TreeNode::Leaf(0.0)); // placeholder
        let left = self.grow(&left_rows, depth + 1, nodes);
        let right = self.grow(&right_rows, depth + 1, nodes);
        nodes[index] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        index as u32
    }

    /// Variance-reduction split on the gradients (squared-error fit to the
    /// residuals).
    fn best_split(&self, rows: &[usize]) -> Option<SplitCandidate> {
        let n_features = self.features[0].len();
        let total_sum: f64 = rows.iter().map(|&r| self.gradients[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.gradients[r].powi(2)).sum();
        let m = rows.len() as f64;
        let parent_sse = total_sq - total_sum * total_sum / m;
        let mut best: Option<SplitCandidate> = None;
        for f in 0..n_features {
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by(|&a, &b| {
                self.features[a][f]
                    .partial_cmp(&self.features[b][f])
                    .expect("finite feature values")
            });
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for i in 0..order.len() - 1 {
                let g = self.gradients[order[i]];
                left_sum += g;
                left_sq += g * g;
                let v = self.features[order[i]][f];
                let next = self.features[order[i + 1]][f];
                if v == next {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let n_right = m - n_left;
                let left_sse = left_sq - left_sum * left_sum / n_left;
                let right_sum = total_sum - left_sum;
                let right_sse = (total_sq - left_sq) - right_sum * right_sum / n_right;
                let candidate = SplitCandidate {
                    feature: f,
                    threshold: midpoint(v, next),
                    gain: parent_sse - left_sse - right_sse,
                };
                if candidate.gain > 1e-12 && best.as_ref().map_or(true, |b| better(&candidate, b))
                {
                    best = Some(candidate);
                }
            }
        }
        best
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_stump_matches_obvious_threshold() {
        // One feature, classes separated at 0.5.
        let features: Vec<Vec<f64>> =
            vec![vec![0.1], vec![0.2], vec![0.3], vec![0.7], vec![0.8], vec![0.9]];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let builder = ClassTreeBuilder {
            features: &features,
            labels: &labels,
            n_classes: 2,
            max_depth: 1,
        };
        let rows: Vec<usize> = (0..6).collect();
        let tree = builder.build(&rows, || vec![0]);
        assert_eq!(tree.leaf_for(&[0.2]), 0);
        assert_eq!(tree.leaf_for(&[0.6]), 1);
        match tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert!((threshold - 0.5).abs() < 1e-12),
            _ => panic!("expected a split at the root"),
        }
    }

    #[test]
    fn tie_break_prefers_lower_feature_index() {
        // Both features split the data perfectly; feature 0 must win.
        let features: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        ];
        let labels = vec![0, 0, 1, 1];
        let builder = ClassTreeBuilder {
            features: &features,
            labels: &labels,
            n_classes: 2,
            max_depth: 2,
        };
        let tree = builder.build(&[0, 1, 2, 3], || vec![1, 0]);
        match tree.nodes[0] {
            TreeNode::Split { feature, .. } => assert_eq!(feature, 0),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn pure_node_stops_growing() {
        let features: Vec<Vec<f64>> = vec![vec![0.1], vec![0.9]];
        let labels = vec![1, 1];
        let builder = ClassTreeBuilder {
            features: &features,
            labels: &labels,
            n_classes: 2,
            max_depth: 5,
        };
        let tree = builder.build(&[0, 1], || vec![0]);
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.leaf_for(&[0.5]), 1);
    }

    #[test]
    fn regression_tree_fits_step_function() {
        let features: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let gradients: Vec<f64> = (0..10).map(|i| if i < 5 { -1.0 } else { 1.0 }).collect();
        let hessians = vec![1.0; 10];
        let builder = RegTreeBuilder {
            features: &features,
            gradients: &gradients,
            hessians: &hessians,
            max_depth: 1,
            leaf_scale: 1.0,
        };
        let tree = builder.build(&(0..10).collect::<Vec<_>>());
        assert!((tree.leaf_for(&[0.2]) + 1.0).abs() < 1e-6); // -5 / (5 + eps)
        assert!((tree.leaf_for(&[0.9]) - 1.0).abs() < 1e-6);
    }
}
