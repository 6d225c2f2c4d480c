//! Adversary 2: reconstruct features with no background data by querying
//! random inputs and interpolating between the random samples whose
//! Shapley values land nearest the target's, feature by feature. Features
//! whose candidate estimates spread too wide are abstained from, and the
//! Chebyshev + Hoeffding bound prices the error of the rest.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Attack2Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty explanation set")]
    EmptySet,
    #[error("reconstruction io: {0}")]
    Io(String),
}

/// Shapley-distance threshold: one global value or one per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Xi {
    Global(f64),
    PerFeature(Vec<f64>),
}

impl Xi {
    fn for_feature(&self, i: usize) -> f64 {
        match self {
            Xi::Global(v) => *v,
            Xi::PerFeature(v) => v[i],
        }
    }
}

/// Fallback threshold when the observed Shapley range is degenerate.
pub const XI_DEGENERATE: f64 = 1e-6;

/// `xi = r / 5` with the degenerate-range fallback.
pub fn xi_from_range(r: f64) -> f64 {
    if r > 0.0 {
        r / 5.0
    } else {
        XI_DEGENERATE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attack2Config {
    /// Minimum candidate-set size per feature.
    pub min_candidates: usize,
    /// Maximum allowed candidate range; wider features are abstained.
    pub tau: f64,
    /// Shapley distance threshold (usually `r / 5`).
    pub xi: Xi,
}

impl Attack2Config {
    /// The standard setting for an observed Shapley range `r`.
    pub fn for_range(r: f64) -> Self {
        Self {
            min_candidates: 30,
            tau: 0.4,
            xi: Xi::Global(xi_from_range(r)),
        }
    }

    fn validate(&self, n: usize, m: usize) -> Result<(), Attack2Error> {
        if self.min_candidates == 0 {
            return Err(Attack2Error::InvalidConfig(
                "min_candidates must be >= 1".into(),
            ));
        }
        if m < self.min_candidates {
            return Err(Attack2Error::InvalidConfig(format!(
                "need at least min_candidates = {} random queries, have {m}",
                self.min_candidates
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Attack2Error::InvalidConfig(format!(
                "tau {} outside (0, 1]",
                self.tau
            )));
        }
        match &self.xi {
            Xi::Global(x) if *x > 0.0 => Ok(()),
            Xi::Global(x) => Err(Attack2Error::InvalidConfig(format!(
                "xi {x} must be positive"
            ))),
            Xi::PerFeature(v) if v.len() == n && v.iter().all(|x| *x > 0.0) => Ok(()),
            Xi::PerFeature(v) => Err(Attack2Error::InvalidConfig(format!(
                "per-feature xi needs {n} positive entries, got {}",
                v.len()
            ))),
        }
    }
}

/// `m` i.i.d. uniform rows on `[0, 1]^n`. The adversary knows nothing
/// about the feature distribution, so independent uniform queries are the
/// only unbiased choice.
pub fn gen_random_queries(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = crate::rng::root(seed);
    (0..m)
        .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Global Shapley range `r = max S - min S` across every feature and
/// sample of an explanation set.
pub fn shap_range(set: &[Vec<f64>]) -> Result<f64, Attack2Error> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in set {
        for &v in s {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Attack2Error::EmptySet);
    }
    Ok(hi - lo)
}

/// Per-feature Shapley ranges, for the per-feature xi variant.
pub fn shap_range_per_feature(set: &[Vec<f64>]) -> Result<Vec<f64>, Attack2Error> {
    let n = set.first().ok_or(Attack2Error::EmptySet)?.len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for s in set {
        for (j, &v) in s.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    Ok(lo.into_iter().zip(hi).map(|(l, h)| h - l).collect())
}

/// One reconstructed sample: per feature either an estimate or an explicit
/// abstention, plus the candidate interval and count behind each decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// `None` marks an abstained feature.
    pub values: Vec<Option<f64>>,
    /// Candidate interval `[a_i, b_i]` per feature.
    pub ranges: Vec<(f64, f64)>,
    /// Candidate count `k_i` per feature.
    pub counts: Vec<usize>,
}

impl Reconstruction {
    pub fn recovered(&self) -> usize {
        self.values.iter().flatten().count()
    }
}

/// Run the interpolation attack for one target explanation.
///
/// Per feature: sort the random queries by Shapley distance (stable, ties
/// by row index), admit candidates while fewer than `min_candidates` are
/// held or the distance is still below `xi`, then either abstain (range
/// wider than `tau`) or answer with the candidate mean.
pub fn run_attack2(
    s_target: &[f64],
    x_rand: &[Vec<f64>],
    s_rand: &[Vec<f64>],
    cfg: &Attack2Config,
) -> Result<Reconstruction, Attack2Error> {
    let n = s_target.len();
    let m = x_rand.len();
    if s_rand.len() != m {
        return Err(Attack2Error::ShapeMismatch(format!(
            "{m} random inputs but {} explanations",
            s_rand.len()
        )));
    }
    if x_rand.iter().any(|r| r.len() != n) || s_rand.iter().any(|r| r.len() != n) {
        return Err(Attack2Error::ShapeMismatch(
            "row width differs from target explanation".into(),
        ));
    }
    cfg.validate(n, m)?;

    let mut values = Vec::with_capacity(n);
    let mut ranges = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(m);

    for i in 0..n {
        let xi = cfg.xi.for_feature(i);
        order.clear();
        order.extend(0..m);
        order.sort_by(|&a, &b| {
            let da = (s_rand[a][i] - s_target[i]).abs();
            let db = (s_rand[b][i] - s_target[i]).abs();
            da.partial_cmp(&db).expect("finite distances").then(a.cmp(&b))
        });

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut k = 0usize;
        for &j in &order {
            let dist = (s_rand[j][i] - s_target[i]).abs();
            if k < cfg.min_candidates || dist < xi {
                let candidate = x_rand[j][i];
                lo = lo.min(candidate);
                hi = hi.max(candidate);
                sum += candidate;
                k += 1;
            } else {
                // Distances only grow from here; nothing more can enter.
                break;
            }
        }

        ranges.push((lo, hi));
        counts.push(k);
        if hi - lo > cfg.tau {
            values.push(None);
        } else {
            values.push(Some(sum / k as f64));
        }
    }

    Ok(Reconstruction {
        values,
        ranges,
        counts,
    })
}

/// The Chebyshev + Hoeffding error bound for one recovered feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub u: f64,
    pub w: f64,
    pub k: usize,
    pub a: f64,
    pub b: f64,
    /// `u * (b - a) / 2 + w`, using the worst-case sigma of a bounded
    /// variable.
    pub error_radius: f64,
    /// Lower bound on `Pr(|x - x_hat| <= error_radius)`.
    pub confidence: f64,
}

/// Price the estimate built from `k` candidates spanning `[a, b]`:
/// radius `u sigma_max + w` holds with probability at least
/// `1 - 1/u^2 - 2 exp(ln(u^2 - 1) - 2 w^2 k / (b - a)^2) / u^2`.
pub fn error_bound(u: f64, w: f64, k: usize, a: f64, b: f64) -> Result<BoundReport, Attack2Error> {
    if !(u > 1.0) || !u.is_finite() {
        return Err(Attack2Error::InvalidConfig(format!("u {u} must exceed 1")));
    }
    if !(w > 0.0) || !w.is_finite() {
        return Err(Attack2Error::InvalidConfig(format!(
            "w {w} must be positive"
        )));
    }
    if k == 0 {
        return Err(Attack2Error::InvalidConfig("k must be >= 1".into()));
    }
    if !(b > a) {
        return Err(Attack2Error::InvalidConfig(format!(
            "candidate range [{a}, {b}] is empty"
        )));
    }
    let width = b - a;
    let sigma_max = width / 2.0;
    let error_radius = u * sigma_max + w;
    let hoeffding = 2.0 * ((u * u - 1.0).ln() - 2.0 * w * w * k as f64 / (width * width)).exp()
        / (u * u);
    let confidence = (1.0 - 1.0 / (u * u) - hoeffding).max(0.0);
    Ok(BoundReport {
        u,
        w,
        k,
        a,
        b,
        error_radius,
        confidence,
    })
}

/// Fraction of feature cells recovered (not abstained) across a set of
/// reconstructions.
pub fn success_rate(recs: &[Reconstruction]) -> Result<f64, Attack2Error> {
    if recs.is_empty() {
        return Err(Attack2Error::EmptySet);
    }
    let cells: usize = recs.iter().map(|r| r.values.len()).sum();
    let recovered: usize = recs.iter().map(Reconstruction::recovered).sum();
    Ok(recovered as f64 / cells as f64)
}

/// Persist reconstructions as JSON lines; abstentions encode as `null`.
pub fn write_reconstructions(
    path: impl AsRef<Path>,
    recs: &[Reconstruction],
) -> Result<(), Attack2Error> {
    use std::io::Write;
    let mut file = std::fs::File::create(path.as_ref())
        .map_err(|e| Attack2Error::Io(format!("cannot create file: {e}")))?;
    for rec in recs {
        let line = serde_json::to_string(rec).expect("reconstruction serializes");
        writeln!(file, "{line}").map_err(|e| Attack2Error::Io(format!("write failed: {e}")))?;
    }
    Ok(())
}

pub fn read_reconstructions(path: impl AsRef<Path>) -> Result<Vec<Reconstruction>, Attack2Error> {
    use std::io::BufRead;
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Attack2Error::Io(format!("cannot open file: {e}")))?;
    std::io::BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| Attack2Error::Io(format!("read failed: {e}")))?;
            serde_json::from_str(&line).map_err(|e| Attack2Error::Io(format!("bad record: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_queries_are_uniform_and_reproducible() {
        let a = gen_random_queries(4, 1600, 9);
        let b = gen_random_queries(4, 1600, 9);
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        for j in 0..4 {
            let mean: f64 = a.iter().map(|r| r[j]).sum::<f64>() / 1600.0;
            // Uniform std is 1/sqrt(12 m); allow three sigma.
            let tol = 3.0 / (12.0f64 * 1600.0).sqrt();
            assert!((mean - 0.5).abs() < tol, "feature {j} mean {mean}");
        }
        assert_ne!(gen_random_queries(4, 10, 1), gen_random_queries(4, 10, 2));
    }

    #[test]
    fn shap_range_spans_all_features() {
        let r = shap_range(&[vec![0.1, -0.2]]).unwrap();
        assert!((r - 0.3).abs() < 1e-12);
        let set = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(shap_range(&set).unwrap(), 0.0);
        assert!(shap_range(&[]).is_err());
        // Permutation invariance over the set.
        let a = vec![vec![0.5, -0.1], vec![0.2, 0.9]];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(shap_range(&a).unwrap(), shap_range(&b).unwrap());
    }

    #[test]
    fn constant_candidates_recover_their_value() {
        // Every random sample has feature 0 equal to 0.7 and a matching
        // Shapley value; the estimate must be exactly 0.7.
        let m = 40;
        let x_rand: Vec<Vec<f64>> = (0..m).map(|_| vec![0.7]).collect();
        let s_rand: Vec<Vec<f64>> = (0..m).map(|_| vec![0.25]).collect();
        let cfg = Attack2Config {
            min_candidates: 30,
            tau: 0.4,
            xi: Xi::Global(0.05),
        };
        let rec = run_attack2(&[0.25], &x_rand, &s_rand, &cfg).unwrap();
        let v = rec.values[0].expect("recovered");
        assert!((v - 0.7).abs() < 1e-12, "mean of constants drifted: {v}");
        assert_eq!(rec.ranges[0], (0.7, 0.7));
        assert_eq!(rec.counts[0], m); // every row sits under xi
    }

    #[test]
    fn wide_candidate_spread_abstains() {
        let m = 40;
        let x_rand: Vec<Vec<f64>> = (0..m)
            .map(|j| vec![0.1 + 0.8 * j as f64 / (m - 1) as f64])
            .collect();
        let s_rand: Vec<Vec<f64>> = (0..m).map(|_| vec![0.0]).collect();
        let cfg = Attack2Config {
            min_candidates: 30,
            tau: 0.4,
            xi: Xi::Global(0.01),
        };
        let rec = run_attack2(&[0.0], &x_rand, &s_rand, &cfg).unwrap();
        assert_eq!(rec.values[0], None);
        assert!(rec.ranges[0].1 - rec.ranges[0].0 > 0.4);
    }

    #[test]
    fn admission_can_exceed_min_candidates_under_xi() {
        // 50 rows all within xi: the literal rule admits all of them, not
        // just the first 30.
        let m = 50;
        let x_rand: Vec<Vec<f64>> = (0..m).map(|j| vec![0.5 + 0.001 * j as f64]).collect();
        let s_rand: Vec<Vec<f64>> = (0..m).map(|j| vec![0.001 * j as f64]).collect();
        let cfg = Attack2Config {
            min_candidates: 30,
            tau: 0.4,
            xi: Xi::Global(1.0),
        };
        let rec = run_attack2(&[0.0], &x_rand, &s_rand, &cfg).unwrap();
        assert_eq!(rec.counts[0], 50);
    }

    #[test]
    fn too_few_queries_is_a_config_error() {
        let cfg = Attack2Config::for_range(1.0);
        let x = gen_random_queries(2, 10, 0);
        let s = vec![vec![0.0, 0.0]; 10];
        assert!(matches!(
            run_attack2(&[0.0, 0.0], &x, &s, &cfg),
            Err(Attack2Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn reconstruction_is_deterministic() {
        let x_rand = gen_random_queries(3, 60, 4);
        let s_rand: Vec<Vec<f64>> = x_rand
            .iter()
            .map(|r| r.iter().map(|v| 0.3 * v - 0.1).collect())
            .collect();
        let cfg = Attack2Config::for_range(shap_range(&s_rand).unwrap());
        let target = [0.05, 0.1, -0.02];
        let a = run_attack2(&target, &x_rand, &s_rand, &cfg).unwrap();
        let b = run_attack2(&target, &x_rand, &s_rand, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recovered_mean_lies_in_candidate_range() {
        let x_rand = gen_random_queries(4, 200, 5);
        let s_rand: Vec<Vec<f64>> = x_rand
            .iter()
            .map(|r| r.iter().map(|v| 0.4 * v).collect())
            .collect();
        let cfg = Attack2Config::for_range(shap_range(&s_rand).unwrap());
        for t in 0..20 {
            let target: Vec<f64> = gen_random_queries(4, 1, 100 + t)[0]
                .iter()
                .map(|v| 0.4 * v)
                .collect();
            let rec = run_attack2(&target, &x_rand, &s_rand, &cfg).unwrap();
            for i in 0..4 {
                if let Some(v) = rec.values[i] {
                    let (a, b) = rec.ranges[i];
                    assert!(a <= v && v <= b);
                }
            }
        }
    }

    #[test]
    fn error_bound_reproduces_reference_points() {
        // u = 2, w = 0.1, k = 30. Tight candidates: error 0.2 at >= 75%.
        let tight = error_bound(2.0, 0.1, 30, 0.0, 0.1).unwrap();
        assert!((tight.error_radius - 0.2).abs() < 1e-12);
        assert!(tight.confidence >= 0.75);
        // Wide candidates: error 0.6 at ~61%.
        let wide = error_bound(2.0, 0.1, 30, 0.0, 0.5).unwrap();
        assert!((wide.error_radius - 0.6).abs() < 1e-12);
        assert!((wide.confidence - 0.61).abs() <= 0.01, "{}", wide.confidence);
    }

    #[test]
    fn error_bound_confidence_approaches_chebyshev_limit() {
        // k -> infinity kills the Hoeffding term, leaving 1 - 1/u^2.
        let report = error_bound(2.0, 0.1, 10_000_000, 0.0, 0.5).unwrap();
        assert!((report.confidence - 0.75).abs() < 1e-9);
    }

    #[test]
    fn error_bound_validates_inputs() {
        assert!(error_bound(1.0, 0.1, 30, 0.0, 0.1).is_err());
        assert!(error_bound(2.0, 0.0, 30, 0.0, 0.1).is_err());
        assert!(error_bound(2.0, 0.1, 0, 0.0, 0.1).is_err());
        assert!(error_bound(2.0, 0.1, 30, 0.2, 0.1).is_err());
    }

    #[test]
    fn success_rate_counts_recovered_cells() {
        let all = Reconstruction {
            values: vec![Some(0.1), Some(0.2)],
            ranges: vec![(0.0, 0.1); 2],
            counts: vec![30; 2],
        };
        let none = Reconstruction {
            values: vec![None, None],
            ranges: vec![(0.0, 0.9); 2],
            counts: vec![30; 2],
        };
        assert_eq!(success_rate(&[all.clone()]).unwrap(), 1.0);
        assert_eq!(success_rate(&[none.clone()]).unwrap(), 0.0);
        assert_eq!(success_rate(&[all, none]).unwrap(), 0.5);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn reconstructions_roundtrip_with_null_abstentions() {
        let recs = vec![Reconstruction {
            values: vec![Some(0.25), None],
            ranges: vec![(0.2, 0.3), (0.1, 0.9)],
            counts: vec![30, 31],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recs.ndjson");
        write_reconstructions(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("null"), "abstention must encode as null");
        assert_eq!(read_reconstructions(&path).unwrap(), recs);
    }
}
