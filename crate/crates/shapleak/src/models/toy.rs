//! Small closed-form predictors used as oracles: their Shapley values are
//! computable by hand, which the tests and the error-bound soundness checks
//! lean on.

use super::Predictor;

/// Two-class model whose class-1 probability is linear in the input:
/// `p1 = clamp(bias + w . x)`, `p0 = 1 - p1`.
///
/// While no clamping occurs, the model is additive across features, so the
/// exact Shapley value of feature `i` for class 1 is `w_i * (x_i - x0_i)`.
#[derive(Debug, Clone)]
pub struct LinearProbModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearProbModel {
    /// True iff `p1` stays strictly inside (0, 1) on the whole unit cube,
    /// i.e. the closed form holds everywhere the attacks sample.
    pub fn unsaturated_on_unit_cube(&self) -> bool {
        let lo: f64 = self.bias
            + self
                .weights
                .iter()
                .map(|&w| if w < 0.0 { w } else { 0.0 })
                .sum::<f64>();
        let hi: f64 = self.bias
            + self
                .weights
                .iter()
                .map(|&w| if w > 0.0 { w } else { 0.0 })
                .sum::<f64>();
        lo > 0.0 && hi < 1.0
    }
}

impl Predictor for LinearProbModel {
    fn n_inputs(&self) -> usize {
        self.weights.len()
    }

    fn n_classes(&self) -> usize {
        2
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let p1 = (self.bias
            + self
                .weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>())
        .clamp(0.0, 1.0);
        out[0] = 1.0 - p1;
        out[1] = p1;
    }
}

/// Wrapper that provably ignores a set of features: they are overwritten
/// with a fixed fill value before the inner model runs. Ignored features
/// are exact null players of the wrapped model.
#[derive(Debug, Clone)]
pub struct MaskedModel<P> {
    pub inner: P,
    pub ignored: Vec<usize>,
    pub fill: f64,
}

impl<P: Predictor> Predictor for MaskedModel<P> {
    fn n_inputs(&self) -> usize {
        self.inner.n_inputs()
    }

    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let mut masked = x.to_vec();
        for &i in &self.ignored {
            masked[i] = self.fill;
        }
        self.inner.predict_into(&masked, out);
    }
}

/// Affine mixture of two predictors: `alpha * f + beta * g`. With
/// `alpha + beta = 1` the output is still a distribution; Shapley values
/// combine linearly either way.
#[derive(Debug, Clone)]
pub struct MixtureModel<F, G> {
    pub alpha: f64,
    pub f: F,
    pub beta: f64,
    pub g: G,
}

impl<F: Predictor, G: Predictor> Predictor for MixtureModel<F, G> {
    fn n_inputs(&self) -> usize {
        self.f.n_inputs()
    }

    fn n_classes(&self) -> usize {
        self.f.n_classes()
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let mut right = vec![0.0; out.len()];
        self.f.predict_into(x, out);
        self.g.predict_into(x, &mut right);
        for (o, r) in out.iter_mut().zip(&right) {
            *o = self.alpha * *o + self.beta * r;
        }
    }
}
