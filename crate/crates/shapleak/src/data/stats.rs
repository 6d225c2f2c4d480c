//! Correlation statistics: Pearson, Spearman and the mean-absolute
//! correlation coefficient (MACC) used as the feature-importance proxy.

use super::DataError;

/// Pearson correlation together with a degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    /// Sample correlation coefficient; 0 when either input has zero
    /// variance.
    pub value: f64,
    /// True when either input was constant and the coefficient is not
    /// defined.
    pub degenerate: bool,
}

/// Sample Pearson correlation, `cov(x, y) / (sigma_x * sigma_y)`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, DataError> {
    if x.len() != y.len() {
        return Err(DataError::LengthMismatch(format!(
            "pearson: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(DataError::TooSmall {
            need: 2,
            have: x.len(),
        });
    }
    let m = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / m;
    let mean_y = y.iter().sum::<f64>() / m;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        value: (cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Mean absolute correlation between one feature column and every class
/// output: `(1/c) * sum_j |rho(feature, y_j)|`.
pub fn macc(feature: &[f64], predictions: &[Vec<f64>]) -> Result<f64, DataError> {
    if predictions.len() != feature.len() {
        return Err(DataError::LengthMismatch(format!(
            "macc: {} rows of predictions vs {} feature values",
            predictions.len(),
            feature.len()
        )));
    }
    if predictions.is_empty() {
        return Err(DataError::Empty("macc: no rows".into()));
    }
    let c = predictions[0].len();
    if c == 0 || predictions.iter().any(|p| p.len() != c) {
        return Err(DataError::LengthMismatch("macc: ragged predictions".into()));
    }
    let mut total = 0.0;
    for j in 0..c {
        let column: Vec<f64> = predictions.iter().map(|p| p[j]).collect();
        total += pearson(feature, &column)?.value.abs();
    }
    Ok(total / c as f64)
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, DataError> {
    Ok(pearson(&ranks(x), &ranks(y))?.value)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // Ties share the average rank of their block.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
