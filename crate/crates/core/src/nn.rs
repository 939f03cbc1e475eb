//! Dense layers and small multilayer perceptrons with hand-written backprop.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown nonlinearity `{other}`"))),
        }
    }
}

/// Flat views over every trainable tensor, in a fixed order.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn sum_squares(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Affine map `y = W x + b` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn xavier<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Dense {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim)
                .map(|_| rng.random_range(-limit..=limit))
                .collect(),
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    fn forward(&self, x: Input<'_>) -> Vec<f64> {
        let mut y = self.bias.clone();
        match x {
            Input::Dense(x) => {
                for (o, yo) in y.iter_mut().enumerate() {
                    let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                    *yo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                }
            }
            Input::Sparse(x) => {
                for (o, yo) in y.iter_mut().enumerate() {
                    let base = o * self.in_dim;
                    *yo += x.iter().map(|&(j, v)| self.weights[base + j] * v).sum::<f64>();
                }
            }
        }
        y
    }
}

/// Layer input: a dense slice or sparse `(index, value)` pairs.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Dense(&'a [f64]),
    Sparse(&'a [(usize, f64)]),
}

impl Input<'_> {
    fn max_index(&self) -> Option<usize> {
        match self {
            Input::Dense(x) => x.len().checked_sub(1),
            Input::Sparse(x) => x.iter().map(|&(j, _)| j).max(),
        }
    }
}

/// Stack of dense layers; `activation` follows every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Per-layer outputs from a forward pass (post-activation; the last is linear).
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub outputs: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn new<R: Rng>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs an input and an output dimension");
        Mlp {
            layers: dims.windows(2).map(|w| Dense::xavier(w[0], w[1], rng)).collect(),
            activation,
        }
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Data("an MLP needs at least one layer".into()));
        }
        for (a, b) in layers.iter().zip(layers.iter().skip(1)) {
            if a.out_dim != b.in_dim {
                return Err(Error::Data(format!(
                    "layer shapes do not chain: {} outputs feed {} inputs",
                    a.out_dim, b.in_dim
                )));
            }
        }
        for l in &layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Data("layer buffers do not match their shape".into()));
            }
        }
        Ok(Mlp { layers, activation })
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn check_input(&self, x: Input<'_>) -> Result<()> {
        let ok = match x {
            Input::Dense(v) => v.len() == self.input_dim(),
            Input::Sparse(_) => x.max_index().is_none_or(|j| j < self.input_dim()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "input does not fit a layer with {} inputs",
                self.input_dim()
            )))
        }
    }

    pub fn forward(&self, x: Input<'_>) -> MlpCache {
        let last = self.layers.len() - 1;
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = match outputs.last() {
                Some(prev) => Input::Dense(prev),
                None => x,
            };
            let mut y = layer.forward(input);
            if l < last {
                for v in &mut y {
                    *v = self.activation.apply(*v);
                }
            }
            outputs.push(y);
        }
        MlpCache { outputs }
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to a dense input (empty for sparse input).
    pub fn backward(&self, x: Input<'_>, cache: &MlpCache, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let input = if l == 0 { x } else { Input::Dense(&cache.outputs[l - 1]) };

            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
            }
            match input {
                Input::Dense(a) => {
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (w, &v) in row.iter_mut().zip(a) {
                            *w += d * v;
                        }
                    }
                }
                Input::Sparse(a) => {
                    for (o, &d) in delta.iter().enumerate() {
                        let base = o * layer.in_dim;
                        for &(j, v) in a {
                            g.weights[base + j] += d * v;
                        }
                    }
                }
            }

            if l == 0 && matches!(input, Input::Sparse(_)) {
                return Vec::new();
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l == 0 {
                return prev;
            }
            let below = &cache.outputs[l - 1];
            for (p, &y) in prev.iter_mut().zip(below) {
                *p *= self.activation.derivative_at_output(y);
            }
            delta = prev;
        }
        unreachable!("loop returns at layer 0")
    }
}

impl ParamSet for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}
