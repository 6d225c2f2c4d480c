//! Synthetic cluster data with controllable feature importance.
//!
//! Five classes sit on five distinct vertices of the unit cube in the three
//! "key" dimensions. Redundant features are random convex combinations of
//! the key features; the rest is uniform noise. Varying the important
//! fraction (key + redundant) changes how much of the input the model can
//! actually use.

use super::{DataError, Dataset};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const N_KEY: usize = 3;
pub const N_CLASSES: usize = 5;

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_features: usize,
    /// Fraction of features that are important (key + redundant); one of
    /// 0.25 / 0.5 / 0.75 in the standard runs, any value with
    /// `round(fraction * n) >= 3` is accepted.
    pub important_fraction: f64,
    pub n_samples: usize,
    /// Standard deviation of the Gaussian clusters on the key features.
    pub cluster_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_features: 12,
            important_fraction: 0.5,
            n_samples: 10_000,
            cluster_std: 0.15,
            seed: 0,
        }
    }
}

/// How a synthetic dataset was generated; stored alongside the data so a
/// file is reproducible from its own metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub config: SynthConfig,
    /// Cluster center per class, on the key features (vertices of the unit
    /// cube).
    pub centers: Vec<[f64; N_KEY]>,
    /// Simplex weights of each redundant feature over the key features.
    pub redundant_weights: Vec<[f64; N_KEY]>,
    /// Column role per feature: number of key, redundant and noise columns,
    /// laid out in that order.
    pub n_key: usize,
    pub n_redundant: usize,
    pub n_noise: usize,
}

fn validate(cfg: &SynthConfig) -> Result<(usize, usize), DataError> {
    if cfg.n_samples == 0 {
        return Err(DataError::InvalidConfig("n_samples must be positive".into()));
    }
    if cfg.cluster_std < 0.0 || !cfg.cluster_std.is_finite() {
        return Err(DataError::InvalidConfig("cluster_std must be finite and >= 0".into()));
    }
    if !(0.0..=1.0).contains(&cfg.important_fraction) {
        return Err(DataError::InvalidConfig(format!(
            "important_fraction {} outside [0, 1]",
            cfg.important_fraction
        )));
    }
    let n_important = (cfg.important_fraction * cfg.n_features as f64).round() as usize;
    if n_important < N_KEY {
        return Err(DataError::InvalidConfig(format!(
            "important_fraction {} of {} features yields {} important columns, need >= {}",
            cfg.important_fraction, cfg.n_features, n_important, N_KEY
        )));
    }
    if n_important > cfg.n_features {
        return Err(DataError::InvalidConfig(
            "important fraction exceeds feature count".into(),
        ));
    }
    Ok((n_important - N_KEY, cfg.n_features - n_important))
}

/// Generation metadata for `cfg` (cluster centers, redundant weights).
/// Deterministic in the seed; `gen_synthetic` uses exactly this recipe.
pub fn synth_meta(cfg: &SynthConfig) -> Result<SynthMeta, DataError> {
    let (n_redundant, n_noise) = validate(cfg)?;
    let mut rng = crate::rng::stream(cfg.seed, 0);

    // All 8 cube vertices in lexicographic order, shuffled by the seed;
    // the first five become the class centers.
    let mut vertices: Vec<[f64; N_KEY]> = (0..8u32)
        .map(|v| {
            [
                f64::from(v >> 2 & 1),
                f64::from(v >> 1 & 1),
                f64::from(v & 1),
            ]
        })
        .collect();
    vertices.shuffle(&mut rng);
    let centers = vertices[..N_CLASSES].to_vec();

    // Uniform draws on the 2-simplex: gaps of two sorted uniforms.
    let redundant_weights = (0..n_redundant)
        .map(|_| {
            let (a, b) = (rng.gen::<f64>(), rng.gen::<f64>());
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            [lo, hi - lo, 1.0 - hi]
        })
        .collect();

    Ok(SynthMeta {
        config: *cfg,
        centers,
        redundant_weights,
        n_key: N_KEY,
        n_redundant,
        n_noise,
    })
}

/// Generate the synthetic dataset for `cfg`.
///
/// Column layout: `key0..key2`, then `red0..`, then `noise0..`. All values
/// are clipped to `[0, 1]`. Bit-identical for identical configs.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Dataset, DataError> {
    let meta = synth_meta(cfg)?;
    let mut rng = crate::rng::stream(cfg.seed, 1);

    let mut features = Vec::with_capacity(cfg.n_samples);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for t in 0..cfg.n_samples {
        let class = t % N_CLASSES;
        let mut row = Vec::with_capacity(cfg.n_features);
        for k in 0..N_KEY {
            let noise: f64 = rng.sample(StandardNormal);
            row.push((meta.centers[class][k] + cfg.cluster_std * noise).clamp(0.0, 1.0));
        }
        for w in &meta.redundant_weights {
            row.push(w[0] * row[0] + w[1] * row[1] + w[2] * row[2]);
        }
        for _ in 0..meta.n_noise {
            row.push(rng.gen::<f64>());
        }
        features.push(row);
        labels.push(class);
    }

    let mut names = Vec::with_capacity(cfg.n_features);
    names.extend((0..meta.n_key).map(|i| format!("key{i}")));
    names.extend((0..meta.n_redundant).map(|i| format!("red{i}")));
    names.extend((0..meta.n_noise).map(|i| format!("noise{i}")));

    Dataset::new(features, labels, names, N_CLASSES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{macc, pearson};

    #[test]
    fn quarter_fraction_has_no_redundant_columns() {
        let cfg = SynthConfig {
            important_fraction: 0.25,
            n_samples: 50,
            ..SynthConfig::default()
        };
        let meta = synth_meta(&cfg).unwrap();
        assert_eq!((meta.n_key, meta.n_redundant, meta.n_noise), (3, 0, 9));
        let d = gen_synthetic(&cfg).unwrap();
        assert_eq!(d.n_features(), 12);
        assert_eq!(d.n_classes, 5);
    }

    #[test]
    fn three_quarter_fraction_has_six_redundant_columns() {
        let cfg = SynthConfig {
            important_fraction: 0.75,
            n_samples: 50,
            ..SynthConfig::default()
        };
        let meta = synth_meta(&cfg).unwrap();
        assert_eq!((meta.n_redundant, meta.n_noise), (6, 3));
    }

    #[test]
    fn rejects_fraction_below_three_keys() {
        let cfg = SynthConfig {
            n_features: 8,
            important_fraction: 0.25, // 2 important columns < 3 keys
            ..SynthConfig::default()
        };
        assert!(matches!(
            gen_synthetic(&cfg),
            Err(DataError::InvalidConfig(_))
        ));
    }

    #[test]
    fn zero_cluster_std_collapses_classes_to_vertices() {
        let cfg = SynthConfig {
            cluster_std: 0.0,
            n_samples: 25,
            ..SynthConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let meta = synth_meta(&cfg).unwrap();
        for (row, &label) in d.features.iter().zip(&d.labels) {
            assert_eq!(&row[..3], &meta.centers[label]);
        }
    }

    #[test]
    fn generation_is_bit_identical() {
        let cfg = SynthConfig {
            n_samples: 200,
            seed: 9,
            ..SynthConfig::default()
        };
        let a = gen_synthetic(&cfg).unwrap();
        let b = gen_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn centers_are_distinct_cube_vertices() {
        for seed in 0..20 {
            let meta = synth_meta(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
            assert_eq!(meta.centers.len(), 5);
            for c in &meta.centers {
                assert!(c.iter().all(|&v| v == 0.0 || v == 1.0));
            }
            let mut dedup = meta.centers.clone();
            dedup.sort_by(|a, b| a.partial_cmp(b).unwrap());
            dedup.dedup();
            assert_eq!(dedup.len(), 5, "seed {seed} produced duplicate centers");
        }
    }

    #[test]
    fn all_values_in_unit_interval() {
        let d = gen_synthetic(&SynthConfig {
            n_samples: 500,
            cluster_std: 0.5,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(d.features.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn redundant_columns_correlate_with_a_key_column() {
        let cfg = SynthConfig {
            important_fraction: 0.75,
            n_samples: 5000,
            seed: 3,
            ..SynthConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let meta = synth_meta(&cfg).unwrap();
        let keys: Vec<Vec<f64>> = (0..3).map(|k| d.column(k)).collect();
        for r in 0..meta.n_redundant {
            let col = d.column(3 + r);
            let best = keys
                .iter()
                .map(|k| pearson(&col, k).unwrap().value.abs())
                .fold(0.0, f64::max);
            assert!(best >= 0.3, "redundant {r} max |rho| = {best}");
        }
    }

    #[test]
    fn noise_columns_have_negligible_label_macc() {
        let cfg = SynthConfig {
            n_samples: 5000,
            seed: 4,
            ..SynthConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let meta = synth_meta(&cfg).unwrap();
        let one_hot = d.one_hot_labels();
        for j in 0..meta.n_noise {
            let col = d.column(3 + meta.n_redundant + j);
            let v = macc(&col, &one_hot).unwrap();
            assert!(v < 0.1, "noise column {j} macc = {v}");
        }
    }
}
