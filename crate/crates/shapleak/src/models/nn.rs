//! Dense feed-forward plumbing shared by the classifier MLP and the
//! inverse attack model: layers, activations, cached forward pass and
//! backpropagation. Trainers own the loss and the update loop.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value `a = act(z)`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Activation applied to the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    /// Raw scores; the caller applies softmax or uses them directly.
    Linear,
    /// Per-unit sigmoid, for outputs living in (0, 1).
    Sigmoid,
}

/// One dense layer, weights stored row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(out.len(), self.n_out);
        for (o, (row, &b)) in out
            .iter_mut()
            .zip(self.w.chunks_exact(self.n_in).zip(&self.b))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// `N(0, 2/fan_in)` weights, zero biases. Standard for ReLU stacks.
    He,
    /// `N(0, 1/fan_in)` weights, zero biases. Keeps sigmoid units out of
    /// their saturated tails at the start of training.
    ScaledNormal,
}

/// A fully-connected network. `layers[i]` feeds `layers[i+1]`; the hidden
/// activation sits between layers, the output activation after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl FeedForward {
    pub fn new(
        widths: &[usize],
        hidden_activation: Activation,
        output_activation: OutputActivation,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let std = match init {
                    Init::He => (2.0 / n_in as f64).sqrt(),
                    Init::ScaledNormal => (1.0 / n_in as f64).sqrt(),
                };
                Dense {
                    w: (0..n_in * n_out)
                        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                    b: vec![0.0; n_out],
                    n_in,
                    n_out,
                }
            })
            .collect();
        Self {
            layers,
            hidden_activation,
            output_activation,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers.first().expect("nonempty net").n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("nonempty net").n_out
    }

    /// Inference forward pass. Dropout is a training-time device and never
    /// applies here.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            layer.forward_into(&a, &mut z);
            if l < last {
                for v in &mut z {
                    *v = self.hidden_activation.apply(*v);
                }
            } else if self.output_activation == OutputActivation::Sigmoid {
                for v in &mut z {
                    *v = sigmoid(*v);
                }
            }
            a = z;
        }
        a
    }

    /// Forward pass that keeps per-layer activations for backprop.
    /// With `dropout_rate > 0`, hidden activations are dropped (inverted
    /// scaling) using `rng`.
    pub fn forward_cached(
        &self,
        x: &[f64],
        dropout_rate: f64,
        rng: &mut impl Rng,
    ) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut scales: Vec<Vec<f64>> = Vec::with_capacity(last);
        activations.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            layer.forward_into(activations.last().expect("input pushed"), &mut z);
            if l < last {
                for v in &mut z {
                    *v = self.hidden_activation.apply(*v);
                }
                let scale: Vec<f64> = if dropout_rate > 0.0 {
                    let keep = 1.0 - dropout_rate;
                    z.iter_mut()
                        .map(|v| {
                            if rng.gen::<f64>() < dropout_rate {
                                *v = 0.0;
                                0.0
                            } else {
                                *v /= keep;
                                1.0 / keep
                            }
                        })
                        .collect()
                } else {
                    vec![1.0; z.len()]
                };
                scales.push(scale);
            } else if self.output_activation == OutputActivation::Sigmoid {
                for v in &mut z {
                    *v = sigmoid(*v);
                }
            }
            activations.push(z);
        }
        ForwardCache {
            activations,
            dropout_scales: scales,
        }
    }

    /// Backpropagate `delta_out = dL/dz_last` (the gradient w.r.t. the last
    /// layer's pre-activation) and accumulate parameter gradients.
    pub fn backward(&self, cache: &ForwardCache, delta_out: Vec<f64>, grads: &mut Gradients) {
        let mut delta = delta_out;
        for l in (0..self.layers.len()).rev() {
            let input = &cache.activations[l];
            let layer = &self.layers[l];
            let gw = &mut grads.w[l];
            let gb = &mut grads.b[l];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                for (g, &v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if l == 0 {
                break;
            }
            // Push the delta through W_l, the dropout scaling and the
            // hidden activation of layer l-1.
            let mut next_delta = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (nd, &w) in next_delta.iter_mut().zip(row) {
                    *nd += d * w;
                }
            }
            let dropped = &cache.activations[l];
            let scale = &cache.dropout_scales[l - 1];
            for ((nd, &d), &s) in next_delta.iter_mut().zip(dropped).zip(scale) {
                if s > 0.0 {
                    // Stored value is post-dropout; a = d / s is the raw
                    // activation the derivative needs.
                    *nd *= s * self.hidden_activation.derivative_from_output(d / s);
                } else {
                    *nd = 0.0;
                }
            }
            delta = next_delta;
        }
    }

    /// SGD step on accumulated gradients: `w -= grad_scale * g + decay * w`
    /// (decay applies to weights only, biases skip it). Callers choose the
    /// reduction through `grad_scale`: `lr / batch` for a batch mean,
    /// plain `lr` for a batch sum.
    pub fn apply_gradients(&mut self, grads: &Gradients, grad_scale: f64, decay: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.w.iter().zip(&grads.b)) {
            for (w, &g) in layer.w.iter_mut().zip(gw) {
                *w -= grad_scale * g + decay * *w;
            }
            for (b, &g) in layer.b.iter_mut().zip(gb) {
                *b -= grad_scale * g;
            }
        }
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            w: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }
}

/// Activations recorded by [`FeedForward::forward_cached`].
/// `activations[0]` is the input; hidden entries are post-dropout.
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
    dropout_scales: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("forward ran")
    }
}

/// Parameter gradients, accumulated over a batch.
pub struct Gradients {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn reset(&mut self) {
        self.w.iter_mut().flatten().for_each(|g| *g = 0.0);
        self.b.iter_mut().flatten().for_each(|g| *g = 0.0);
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference_check(hidden: Activation, output: OutputActivation) {
        let mut rng = crate::rng::root(3);
        let net0 = FeedForward::new(&[3, 5, 2], hidden, output, Init::ScaledNormal, &mut rng);
        let x = [0.3, -0.2, 0.8];
        let target = [0.7, 0.1];

        // Loss: plain squared error on the network output.
        let loss = |net: &FeedForward| -> f64 {
            net.forward(&x)
                .iter()
                .zip(&target)
                .map(|(o, t)| (o - t) * (o - t))
                .sum()
        };

        // Analytic gradient via backward.
        let cache = net0.forward_cached(&x, 0.0, &mut rng);
        let out = cache.output();
        let delta: Vec<f64> = out
            .iter()
            .zip(&target)
            .map(|(o, t)| {
                let dl_da = 2.0 * (o - t);
                match output {
                    OutputActivation::Linear => dl_da,
                    OutputActivation::Sigmoid => dl_da * o * (1.0 - o),
                }
            })
            .collect();
        let mut grads = net0.zero_gradients();
        net0.backward(&cache, delta, &mut grads);

        let eps = 1e-6;
        for l in 0..net0.layers.len() {
            for i in 0..net0.layers[l].w.len() {
                let mut plus = net0.clone();
                plus.layers[l].w[i] += eps;
                let mut minus = net0.clone();
                minus.layers[l].w[i] -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                assert!(
                    (numeric - grads.w[l][i]).abs() < 1e-5,
                    "layer {l} w[{i}]: numeric {numeric} vs analytic {}",
                    grads.w[l][i]
                );
            }
            for i in 0..net0.layers[l].b.len() {
                let mut plus = net0.clone();
                plus.layers[l].b[i] += eps;
                let mut minus = net0.clone();
                minus.layers[l].b[i] -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                assert!(
                    (numeric - grads.b[l][i]).abs() < 1e-5,
                    "layer {l} b[{i}]: numeric {numeric} vs analytic {}",
                    grads.b[l][i]
                );
            }
        }
    }

    #[test]
    fn backprop_matches_finite_differences_sigmoid() {
        finite_difference_check(Activation::Sigmoid, OutputActivation::Sigmoid);
    }

    #[test]
    fn backprop_matches_finite_differences_relu_linear() {
        finite_difference_check(Activation::Relu, OutputActivation::Linear);
    }

    #[test]
    fn backprop_matches_finite_differences_tanh() {
        finite_difference_check(Activation::Tanh, OutputActivation::Linear);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut out = vec![0.0; 3];
        softmax(&[1.0, 2.0, 3.0], &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out[2] > out[1] && out[1] > out[0]);
    }

    #[test]
    fn dropout_zero_is_identity_between_forward_paths() {
        let mut rng = crate::rng::root(4);
        let net = FeedForward::new(
            &[4, 6, 3],
            Activation::Relu,
            OutputActivation::Linear,
            Init::He,
            &mut rng,
        );
        let x = [0.1, 0.9, 0.4, 0.2];
        let plain = net.forward(&x);
        let cached = net.forward_cached(&x, 0.0, &mut rng);
        assert_eq!(plain, cached.output());
    }
}
