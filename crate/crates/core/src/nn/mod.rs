//! Feed-forward combination network, optimizers and the shared
//! document-minibatch training loop.

mod fit;
mod optim;

pub use fit::{accuracy, fit, FitConfig, FitReport, Trainable};
pub use optim::{Optimizer, OptimizerKind};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Tensor, Var};
use crate::{Error, Result};

/// One fully connected layer, `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Small MLP mapping a `(score, log prior)` pair to a single score.
/// Hidden layers use ReLU, the output is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct FNet {
    pub layers: Vec<Layer>,
}

/// Shape of the combination network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FNetConfig {
    pub hidden: Vec<usize>,
    /// Frobenius radius each weight matrix is projected onto after an update.
    pub radius: f64,
}

impl Default for FNetConfig {
    fn default() -> Self {
        Self { hidden: vec![100, 100], radius: 1.0 }
    }
}

fn widths(hidden: &[usize]) -> Vec<usize> {
    let mut w = vec![2];
    w.extend_from_slice(hidden);
    w.push(1);
    w
}

impl FNet {
    /// Uniform `±1/sqrt(fan_in)` weights and zero biases, then projected.
    pub fn random<R: Rng + ?Sized>(cfg: &FNetConfig, rng: &mut R) -> Self {
        let w = widths(&cfg.hidden);
        let layers = w
            .windows(2)
            .map(|p| {
                let bound = 1.0 / (p[0] as f64).sqrt();
                let data = (0..p[0] * p[1]).map(|_| rng.random_range(-bound..bound)).collect();
                Layer { weight: Tensor::new(p[1], p[0], data), bias: Tensor::zeros(p[1], 1) }
            })
            .collect();
        let mut f = Self { layers };
        f.project(cfg.radius);
        f
    }

    pub fn zeros(hidden: &[usize]) -> Self {
        let w = widths(hidden);
        let layers = w
            .windows(2)
            .map(|p| Layer { weight: Tensor::zeros(p[1], p[0]), bias: Tensor::zeros(p[1], 1) })
            .collect();
        Self { layers }
    }

    /// Weights realizing `f(a, b) = a + b` exactly: the first layer splits
    /// each input into its positive and negative parts, later hidden layers
    /// copy those four units and the output recombines them.
    pub fn additive(hidden: &[usize]) -> Result<Self> {
        if hidden.is_empty() || hidden.iter().any(|&h| h < 4) {
            return Err(Error::invalid("an additive network needs hidden layers of width >= 4"));
        }
        let mut f = Self::zeros(hidden);
        let last = f.layers.len() - 1;
        for (li, layer) in f.layers.iter_mut().enumerate() {
            let cols = layer.weight.cols();
            let w = layer.weight.data_mut();
            if li == 0 {
                w[0] = 1.0;
                w[cols] = -1.0;
                w[2 * cols + 1] = 1.0;
                w[3 * cols + 1] = -1.0;
            } else if li == last {
                w[..4].copy_from_slice(&[1.0, -1.0, 1.0, -1.0]);
            } else {
                for k in 0..4 {
                    w[k * cols + k] = 1.0;
                }
            }
        }
        Ok(f)
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.weight.rows()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// Rescales every weight matrix whose Frobenius norm exceeds `radius`.
    pub fn project(&mut self, radius: f64) {
        for l in &mut self.layers {
            let n = l.weight.frobenius_norm();
            if n > radius {
                let k = radius / n;
                l.weight.data_mut().iter_mut().for_each(|w| *w *= k);
            }
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors().into_iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Applies the network column-wise to a `2 x S` input; returns `1 x S`.
    pub fn forward(tape: &mut Tape, vars: &[Var], x: Var) -> Var {
        let n = vars.len() / 2;
        let mut h = x;
        for l in 0..n {
            h = tape.affine(vars[2 * l], h, vars[2 * l + 1]);
            if l + 1 < n {
                h = tape.relu(h);
            }
        }
        h
    }

    /// Plain evaluation at one input pair.
    pub fn eval(&self, score: f64, log_prior: f64) -> Result<f64> {
        if !score.is_finite() || !log_prior.is_finite() {
            return Err(Error::invalid("non-finite input to the combination network"));
        }
        let mut h = vec![score, log_prior];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut next: Vec<f64> = l.bias.data().to_vec();
            for (r, out) in next.iter_mut().enumerate() {
                *out += l.weight.row(r).iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
                if li < last {
                    *out = out.max(0.0);
                }
            }
            h = next;
        }
        Ok(h[0])
    }
}
