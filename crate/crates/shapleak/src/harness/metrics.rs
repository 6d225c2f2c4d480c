//! Reconstruction metrics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no cells selected by the mask")]
    EmptyMask,
}

fn check_shapes(
    xhat: &[Vec<f64>],
    x: &[Vec<f64>],
    mask: Option<&[Vec<bool>]>,
) -> Result<(), MetricError> {
    if xhat.len() != x.len() {
        return Err(MetricError::ShapeMismatch(format!(
            "{} reconstructed rows vs {} truth rows",
            xhat.len(),
            x.len()
        )));
    }
    for (i, (a, b)) in xhat.iter().zip(x).enumerate() {
        if a.len() != b.len() {
            return Err(MetricError::ShapeMismatch(format!(
                "row {i}: {} vs {} features",
                a.len(),
                b.len()
            )));
        }
    }
    if let Some(mask) = mask {
        if mask.len() != x.len() || mask.iter().zip(x).any(|(m, r)| m.len() != r.len()) {
            return Err(MetricError::ShapeMismatch("mask shape".into()));
        }
    }
    Ok(())
}

/// Mean absolute error over the masked cells; `None` masks every cell.
pub fn l1_loss(
    xhat: &[Vec<f64>],
    x: &[Vec<f64>],
    mask: Option<&[Vec<bool>]>,
) -> Result<f64, MetricError> {
    check_shapes(xhat, x, mask)?;
    let mut total = 0.0;
    let mut cells = 0usize;
    for (i, (a, b)) in xhat.iter().zip(x).enumerate() {
        for (j, (va, vb)) in a.iter().zip(b).enumerate() {
            if mask.map_or(true, |m| m[i][j]) {
                total += (va - vb).abs();
                cells += 1;
            }
        }
    }
    if cells == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(total / cells as f64)
}

/// Per-feature mean absolute error over masked cells. Features with no
/// selected cells come back as NaN.
pub fn per_feature_l1(
    xhat: &[Vec<f64>],
    x: &[Vec<f64>],
    mask: Option<&[Vec<bool>]>,
) -> Result<Vec<f64>, MetricError> {
    check_shapes(xhat, x, mask)?;
    let n = x.first().map_or(0, Vec::len);
    let mut totals = vec![0.0f64; n];
    let mut counts = vec![0usize; n];
    for (i, (a, b)) in xhat.iter().zip(x).enumerate() {
        for (j, (va, vb)) in a.iter().zip(b).enumerate() {
            if mask.map_or(true, |m| m[i][j]) {
                totals[j] += (va - vb).abs();
                counts[j] += 1;
            }
        }
    }
    Ok(totals
        .into_iter()
        .zip(counts)
        .map(|(t, c)| if c == 0 { f64::NAN } else { t / c as f64 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_reconstruction_scores_zero() {
        let x = vec![vec![0.1, 0.9], vec![0.5, 0.4]];
        assert_eq!(l1_loss(&x, &x, None).unwrap(), 0.0);
    }

    #[test]
    fn inverted_binary_matrix_scores_one() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let flipped: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().map(|v| 1.0 - v).collect())
            .collect();
        assert_eq!(l1_loss(&flipped, &x, None).unwrap(), 1.0);
    }

    #[test]
    fn uniform_guesses_score_one_third_on_uniform_truth() {
        // E|U - U'| = 1/3; Monte-Carlo confirmation at large m*n.
        let mut rng = crate::rng::root(8);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..600)
                .map(|_| (0..20).map(|_| rng.gen::<f64>()).collect())
                .collect()
        };
        let x = draw(&mut rng);
        let guess = draw(&mut rng);
        let l1 = l1_loss(&guess, &x, None).unwrap();
        assert!((l1 - 1.0 / 3.0).abs() < 0.02, "l1 = {l1}");
    }

    #[test]
    fn mask_selects_cells() {
        let x = vec![vec![0.0, 0.0]];
        let xhat = vec![vec![1.0, 0.5]];
        let mask = vec![vec![true, false]];
        assert_eq!(l1_loss(&xhat, &x, Some(&mask)).unwrap(), 1.0);
        let empty = vec![vec![false, false]];
        assert!(matches!(
            l1_loss(&xhat, &x, Some(&empty)),
            Err(MetricError::EmptyMask)
        ));
    }

    #[test]
    fn per_feature_errors_split_by_column() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let xhat = vec![vec![0.2, 0.6], vec![0.4, 0.6]];
        let pf = per_feature_l1(&xhat, &x, None).unwrap();
        assert!((pf[0] - 0.3).abs() < 1e-12);
        assert!((pf[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = vec![vec![0.0]];
        let bad = vec![vec![0.0, 1.0]];
        assert!(l1_loss(&bad, &x, None).is_err());
    }
}
