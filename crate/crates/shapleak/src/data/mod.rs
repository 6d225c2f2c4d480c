//! Datasets: ingestion, normalization, splitting, synthetic generation and
//! correlation statistics.
//!
//! All feature matrices are row-major `Vec<Vec<f64>>`. After
//! [`normalize_minmax`] every value lies in `[0, 1]`, which the models,
//! explanations and attacks all assume.

mod io;
mod stats;
mod synthetic;

pub use io::{load_csv, DatasetFile, DATASET_FORMAT, DATASET_VERSION};
pub use stats::{macc, pearson, spearman, Correlation};
pub use synthetic::{gen_synthetic, synth_meta, SynthConfig, SynthMeta};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors surfaced by dataset operations.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("bad label at row {row}: {detail}")]
    BadLabel { row: usize, detail: String },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("dataset too small: need at least {need} rows, have {have}")]
    TooSmall { need: usize, have: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed dataset file: {0}")]
    Malformed(String),
}

/// A labelled tabular dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Row-major feature matrix, `m x n`.
    pub features: Vec<Vec<f64>>,
    /// Class index per row, each in `[0, n_classes)`.
    pub labels: Vec<usize>,
    /// One name per feature column.
    pub feature_names: Vec<String>,
    /// Number of classes `c`.
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        n_classes: usize,
    ) -> Result<Self, DataError> {
        if features.is_empty() {
            return Err(DataError::Empty("no rows".into()));
        }
        let n = features[0].len();
        if n == 0 {
            return Err(DataError::Empty("no feature columns".into()));
        }
        if features.iter().any(|r| r.len() != n) {
            return Err(DataError::LengthMismatch("ragged feature rows".into()));
        }
        if labels.len() != features.len() {
            return Err(DataError::LengthMismatch(format!(
                "{} rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if feature_names.len() != n {
            return Err(DataError::LengthMismatch(format!(
                "{} columns but {} names",
                n,
                feature_names.len()
            )));
        }
        if n_classes == 0 || labels.iter().any(|&l| l >= n_classes) {
            return Err(DataError::BadLabel {
                row: labels.iter().position(|&l| l >= n_classes).unwrap_or(0),
                detail: format!("label out of range for {n_classes} classes"),
            });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            n_classes,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Copy of feature column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.iter().map(|r| r[j]).collect()
    }

    /// One-hot label matrix, `m x c`.
    pub fn one_hot_labels(&self) -> Vec<Vec<f64>> {
        self.labels
            .iter()
            .map(|&l| {
                let mut row = vec![0.0; self.n_classes];
                row[l] = 1.0;
                row
            })
            .collect()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            n_classes: self.n_classes,
        }
    }
}

/// Per-feature min/max captured by [`normalize_minmax`]; inverts the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

/// Min-max normalize every feature into `[0, 1]`.
///
/// A constant column maps to all zeros; the record still stores its
/// min/max so [`denormalize`] restores the original value.
pub fn normalize_minmax(d: &Dataset) -> (Dataset, NormRecord) {
    let n = d.n_features();
    let mut mins = vec![f64::INFINITY; n];
    let mut maxs = vec![f64::NEG_INFINITY; n];
    for row in &d.features {
        for j in 0..n {
            mins[j] = mins[j].min(row[j]);
            maxs[j] = maxs[j].max(row[j]);
        }
    }
    let features = d
        .features
        .iter()
        .map(|row| {
            (0..n)
                .map(|j| {
                    let range = maxs[j] - mins[j];
                    if range > 0.0 {
                        (row[j] - mins[j]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    (
        Dataset {
            features,
            labels: d.labels.clone(),
            feature_names: d.feature_names.clone(),
            n_classes: d.n_classes,
        },
        NormRecord { mins, maxs },
    )
}

/// Invert [`normalize_minmax`].
pub fn denormalize(d: &Dataset, record: &NormRecord) -> Dataset {
    let n = d.n_features();
    let features = d
        .features
        .iter()
        .map(|row| {
            (0..n)
                .map(|j| {
                    let range = record.maxs[j] - record.mins[j];
                    if range > 0.0 {
                        record.mins[j] + row[j] * range
                    } else {
                        record.mins[j]
                    }
                })
                .collect()
        })
        .collect();
    Dataset {
        features,
        labels: d.labels.clone(),
        feature_names: d.feature_names.clone(),
        n_classes: d.n_classes,
    }
}

/// 60/20/20 train/aux/val partition of a dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub aux: Dataset,
    pub val: Dataset,
    pub seed: u64,
}

/// Randomly partition `d` into 60% train, 20% aux, 20% val.
///
/// Sizes are `floor(0.6 m)` / `floor(0.2 m)` / remainder, rows shuffled by
/// `seed`. Every source row lands in exactly one part.
pub fn split(d: &Dataset, seed: u64) -> Result<Split, DataError> {
    let m = d.n_rows();
    if m < 5 {
        return Err(DataError::TooSmall { need: 5, have: m });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut crate::rng::root(seed));
    let n_train = (0.6 * m as f64).floor() as usize;
    let n_aux = (0.2 * m as f64).floor() as usize;
    Ok(Split {
        train: d.subset(&idx[..n_train]),
        aux: d.subset(&idx[n_train..n_train + n_aux]),
        val: d.subset(&idx[n_train + n_aux..]),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(values: &[&[f64]]) -> Dataset {
        let features: Vec<Vec<f64>> = values.iter().map(|r| r.to_vec()).collect();
        let n = features[0].len();
        Dataset::new(
            features.clone(),
            vec![0; features.len()],
            (0..n).map(|j| format!("f{j}")).collect(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn normalize_maps_column_to_unit_range() {
        let d = toy(&[&[2.0], &[4.0], &[6.0]]);
        let (nd, rec) = normalize_minmax(&d);
        assert_eq!(nd.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(rec.mins, vec![2.0]);
        assert_eq!(rec.maxs, vec![6.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let d = toy(&[&[5.0], &[5.0], &[5.0]]);
        let (nd, rec) = normalize_minmax(&d);
        assert_eq!(nd.column(0), vec![0.0, 0.0, 0.0]);
        // And denormalize restores the constant.
        assert_eq!(denormalize(&nd, &rec).column(0), vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn normalize_denormalize_roundtrip() {
        let mut rng = crate::rng::root(11);
        use rand::Rng;
        let features: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.gen_range(-30.0..70.0)).collect())
            .collect();
        let d = Dataset::new(
            features,
            vec![0; 40],
            (0..6).map(|j| format!("f{j}")).collect(),
            1,
        )
        .unwrap();
        let (nd, rec) = normalize_minmax(&d);
        let back = denormalize(&nd, &rec);
        for (a, b) in d.features.iter().flatten().zip(back.features.iter().flatten()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let d = toy(&[&[2.0, 1.0], &[4.0, 1.0], &[6.0, 1.0]]);
        let (n1, _) = normalize_minmax(&d);
        let (n2, _) = normalize_minmax(&n1);
        assert_eq!(n1, n2);
    }

    #[test]
    fn split_100_rows_is_60_20_20() {
        let d = Dataset::new(
            (0..100).map(|i| vec![i as f64]).collect(),
            vec![0; 100],
            vec!["f0".into()],
            1,
        )
        .unwrap();
        let s = split(&d, 7).unwrap();
        assert_eq!(
            (s.train.n_rows(), s.aux.n_rows(), s.val.n_rows()),
            (60, 20, 20)
        );
    }

    #[test]
    fn split_101_rows_rounds_down_train_and_aux() {
        let d = Dataset::new(
            (0..101).map(|i| vec![i as f64]).collect(),
            vec![0; 101],
            vec!["f0".into()],
            1,
        )
        .unwrap();
        let s = split(&d, 7).unwrap();
        assert_eq!(
            (s.train.n_rows(), s.aux.n_rows(), s.val.n_rows()),
            (60, 20, 21)
        );
    }

    #[test]
    fn split_is_deterministic() {
        let d = Dataset::new(
            (0..50).map(|i| vec![i as f64]).collect(),
            (0..50).map(|i| i % 3).collect(),
            vec!["f0".into()],
            3,
        )
        .unwrap();
        let a = split(&d, 42).unwrap();
        let b = split(&d, 42).unwrap();
        assert_eq!(a.train.features, b.train.features);
        assert_eq!(a.aux.features, b.aux.features);
        assert_eq!(a.val.features, b.val.features);
    }

    #[test]
    fn split_rejects_tiny_dataset() {
        let d = Dataset::new(
            (0..4).map(|i| vec![i as f64]).collect(),
            vec![0; 4],
            vec!["f0".into()],
            1,
        )
        .unwrap();
        assert!(matches!(split(&d, 0), Err(DataError::TooSmall { .. })));
    }

    proptest! {
        #[test]
        fn split_partitions_every_row(m in 5usize..200, seed in 0u64..1000) {
            let d = Dataset::new(
                (0..m).map(|i| vec![i as f64]).collect(),
                vec![0; m],
                vec!["f0".into()],
                1,
            ).unwrap();
            let s = split(&d, seed).unwrap();
            let mut seen: Vec<usize> = s
                .train
                .features
                .iter()
                .chain(&s.aux.features)
                .chain(&s.val.features)
                .map(|r| r[0] as usize)
                .collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..m).collect::<Vec<_>>());
        }

        #[test]
        fn normalized_values_stay_in_unit_interval(
            rows in proptest::collection::vec(
                proptest::collection::vec(-1e6f64..1e6, 3), 1..40)
        ) {
            let m = rows.len();
            let d = Dataset::new(
                rows,
                vec![0; m],
                vec!["a".into(), "b".into(), "c".into()],
                1,
            ).unwrap();
            let (nd, _) = normalize_minmax(&d);
            for v in nd.features.iter().flatten() {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
