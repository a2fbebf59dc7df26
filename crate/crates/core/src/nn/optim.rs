use serde::{Deserialize, Serialize};

use crate::diff::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(crate::Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// First-order update rule with its running state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn apply(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                }
                self.step += 1;
                let c1 = 1.0 - self.beta1.powi(self.step);
                let c2 = 1.0 - self.beta2.powi(self.step);
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (i, (x, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * d;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * d * d;
                        *x -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut o = Optimizer::new(OptimizerKind::Sgd, 0.5);
        o.apply(vec![&mut p], &[Tensor::vector(vec![2.0, -2.0])]);
        assert_eq!(p.data(), &[0.0, 3.0]);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = Tensor::vector(vec![1.0, 1.0]);
        let mut o = Optimizer::new(OptimizerKind::Adam, 0.1);
        o.apply(vec![&mut p], &[Tensor::vector(vec![3.0, -0.01])]);
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
        assert!((p.data()[1] - 1.1).abs() < 1e-4);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Tensor::scalar(5.0);
        let mut o = Optimizer::new(OptimizerKind::Adam, 0.1);
        for _ in 0..500 {
            let g = Tensor::scalar(2.0 * p.as_scalar());
            o.apply(vec![&mut p], &[g]);
        }
        assert!(p.as_scalar().abs() < 1e-2);
    }
}
