//! Minimal dense feedforward networks with reverse-mode gradients.
//!
//! Hidden layers are affine maps followed by Leaky-ReLU; the last affine layer
//! feeds either a softmax head (policy and posterior networks) or is returned
//! as is (value networks). Weights are stored row-major as `[out][in]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

pub const DEFAULT_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    slope: f64,
    head: Head,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradients congruent with a [`DenseNet`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

struct Trace {
    /// Pre-activation of every layer.
    pre: Vec<Vec<f64>>,
    /// `post[0]` is the input, `post[l + 1]` the activation after layer `l`.
    post: Vec<Vec<f64>>,
}

impl DenseNet {
    /// Randomly initialized network, uniform in `±sqrt(6 / (n_in + n_out))`.
    pub fn new(layer_sizes: &[usize], head: Head, seed: u64) -> Result<Self> {
        let mut net = DenseNet::zeros(layer_sizes, head)?;
        let mut rng = seed::rng(seed);
        for (l, w) in net.weights.iter_mut().enumerate() {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = libm::sqrt(6.0 / (n_in + n_out) as f64);
            for x in w.iter_mut() {
                *x = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], head: Head) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "invalid layer sizes {layer_sizes:?}"
            )));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(DenseNet {
            layer_sizes: layer_sizes.to_vec(),
            slope: DEFAULT_SLOPE,
            head,
            weights,
            biases,
        })
    }

    /// Builds a network from explicit parameters.
    pub fn from_parts(
        layer_sizes: &[usize],
        head: Head,
        slope: f64,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut net = DenseNet::zeros(layer_sizes, head)?;
        net.slope = slope;
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if l >= net.weights.len() {
                break;
            }
            if w.len() != net.weights[l].len() {
                return Err(Error::LengthMismatch {
                    expected: net.weights[l].len(),
                    got: w.len(),
                });
            }
            if b.len() != net.biases[l].len() {
                return Err(Error::LengthMismatch {
                    expected: net.biases[l].len(),
                    got: b.len(),
                });
            }
        }
        if weights.len() != net.weights.len() || biases.len() != net.biases.len() {
            return Err(Error::LengthMismatch {
                expected: net.weights.len(),
                got: weights.len(),
            });
        }
        net.weights = weights;
        net.biases = biases;
        Ok(net)
    }

    /// Checks internal shape consistency, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        DenseNet::from_parts(
            &self.layer_sizes,
            self.head,
            self.slope,
            self.weights.clone(),
            self.biases.clone(),
        )
        .map(|_| ())
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.slope = slope;
        self
    }

    /// Zeroes the output layer so that a softmax head starts uniform and a
    /// linear head starts at 0.
    pub fn zero_output_layer(&mut self) {
        if let Some(w) = self.weights.last_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        if let Some(b) = self.biases.last_mut() {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// `Σ (n_in + 1) n_out` over layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            p.extend_from_slice(w);
            p.extend_from_slice(b);
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&params[i..i + nw]);
            i += nw;
            b.copy_from_slice(&params[i..i + nb]);
            i += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::LengthMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let n_layers = self.weights.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post = Vec::with_capacity(n_layers + 1);
        post.push(x.to_vec());
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &post[l];
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            debug_assert_eq!(z.len(), n_out);
            let act = if l + 1 < n_layers {
                z.iter()
                    .map(|&v| if v > 0.0 { v } else { self.slope * v })
                    .collect()
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(act);
        }
        Trace { pre, post }
    }

    /// Output of the last affine layer, before the head.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).post.pop().unwrap())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let logits = self.logits(x)?;
        Ok(match self.head {
            Head::Softmax => softmax(&logits),
            Head::Linear => logits,
        })
    }

    /// Gradients of a scalar loss given `dL/d(output)` (after the head).
    pub fn backward(&self, x: &[f64], output_grad: &[f64]) -> Result<GradientBundle> {
        self.check_input(x)?;
        if output_grad.len() != self.n_outputs() {
            return Err(Error::LengthMismatch {
                expected: self.n_outputs(),
                got: output_grad.len(),
            });
        }
        let trace = self.trace(x);
        let delta = match self.head {
            Head::Linear => output_grad.to_vec(),
            Head::Softmax => {
                let p = softmax(trace.post.last().unwrap());
                let dot: f64 = p.iter().zip(output_grad).map(|(a, b)| a * b).sum();
                p.iter()
                    .zip(output_grad)
                    .map(|(pi, gi)| pi * (gi - dot))
                    .collect()
            }
        };
        Ok(self.backprop(&trace, delta))
    }

    /// Gradients of a scalar loss given `dL/d(logits)` directly. For a softmax
    /// head this skips the Jacobian, e.g. cross-entropy gives `p - onehot`.
    pub fn backward_logits(&self, x: &[f64], logit_grad: &[f64]) -> Result<GradientBundle> {
        self.check_input(x)?;
        if logit_grad.len() != self.n_outputs() {
            return Err(Error::LengthMismatch {
                expected: self.n_outputs(),
                got: logit_grad.len(),
            });
        }
        let trace = self.trace(x);
        Ok(self.backprop(&trace, logit_grad.to_vec()))
    }

    fn backprop(&self, trace: &Trace, mut delta: Vec<f64>) -> GradientBundle {
        let n_layers = self.weights.len();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        for l in (0..n_layers).rev() {
            let n_in = self.layer_sizes[l];
            let input = &trace.post[l];
            for (o, &d) in delta.iter().enumerate() {
                gb[l][o] = d;
                if d != 0.0 {
                    let row = &mut gw[l][o * n_in..(o + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g = d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            for (p, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                if z <= 0.0 {
                    *p *= self.slope;
                }
            }
            delta = prev;
        }
        GradientBundle {
            weights: gw,
            biases: gb,
        }
    }

    /// Descent step `p <- p - lr g`, after rescaling `g` to global norm
    /// `clip` when it is larger.
    pub fn sgd_step(&mut self, grads: &GradientBundle, lr: f64, clip: Option<f64>) -> Result<()> {
        if grads.weights.len() != self.weights.len()
            || grads
                .weights
                .iter()
                .zip(&self.weights)
                .any(|(g, w)| g.len() != w.len())
            || grads
                .biases
                .iter()
                .zip(&self.biases)
                .any(|(g, b)| g.len() != b.len())
        {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                got: grads.len(),
            });
        }
        let mut scale = lr;
        if let Some(c) = clip {
            let norm = grads.norm();
            if norm > c {
                scale *= c / norm;
            }
        }
        if scale == 0.0 {
            return Ok(());
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (p, d) in w.iter_mut().zip(g) {
                *p -= scale * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (p, d) in b.iter_mut().zip(g) {
                *p -= scale * d;
            }
        }
        Ok(())
    }
}

impl GradientBundle {
    pub fn len(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .map(|g| g * g)
            .sum();
        libm::sqrt(sq)
    }

    /// Same order as [`DenseNet::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Numerically stable softmax; entries are floored at the smallest positive
/// normal so the output stays strictly positive.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x = (*x / total).max(f64::MIN_POSITIVE);
    }
    p
}
