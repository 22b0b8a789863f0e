//! Optimizers with decoupled weight decay and the learning-rate schedule.
//!
//! Adaptive (default), for step `t >= 1` with gradient `g`:
//!
//! ```text
//! m <- b1 m + (1 - b1) g
//! v <- b2 v + (1 - b2) g^2
//! theta <- theta - lr * ( m / (1 - b1^t) / (sqrt(v / (1 - b2^t)) + eps) + wd * theta )
//! ```
//!
//! Momentum-free: `theta <- theta - lr * (g + wd * theta)`.
//!
//! Weight decay applies to tensors named `*.weight` only; biases, gains and
//! shifts are not decayed.

use serde::{Deserialize, Serialize};

use super::network::TensorInfo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    AdamW,
    Sgd,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    decay_mask: Vec<bool>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64, tensors: &[TensorInfo]) -> Self {
        let n = tensors.iter().map(TensorInfo::len).sum();
        let mut decay_mask = vec![false; n];
        for t in tensors.iter().filter(|t| t.name.ends_with(".weight")) {
            decay_mask[t.range()].fill(true);
        }
        Optimizer {
            kind,
            weight_decay,
            decay_mask,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            let dir = match self.kind {
                OptimizerKind::AdamW => {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                    (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + ADAM_EPS)
                }
                OptimizerKind::Sgd => g,
            };
            let decay = if self.decay_mask[i] {
                self.weight_decay * params[i]
            } else {
                0.0
            };
            params[i] -= lr * (dir + decay);
        }
    }
}

/// Linear warmup over the first `warmup_steps`, then cosine decay to zero
/// at `total_steps`.
pub fn learning_rate(base: f64, step: usize, warmup_steps: usize, total_steps: usize) -> f64 {
    if step < warmup_steps {
        return base * (step + 1) as f64 / warmup_steps as f64;
    }
    let span = total_steps.saturating_sub(warmup_steps);
    if span == 0 {
        return base;
    }
    let progress = (step - warmup_steps) as f64 / span as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensors() -> Vec<TensorInfo> {
        vec![
            TensorInfo {
                name: "a.weight".into(),
                offset: 0,
                shape: vec![2],
            },
            TensorInfo {
                name: "a.bias".into(),
                offset: 2,
                shape: vec![1],
            },
        ]
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        for kind in [OptimizerKind::AdamW, OptimizerKind::Sgd] {
            let mut opt = Optimizer::new(kind, 0.1, &tensors());
            let mut p = vec![0.5, -1.0, 2.0];
            let before = p.clone();
            opt.step(&mut p, &[0.3, -0.2, 1.0], 0.0);
            assert_eq!(p, before);
        }
    }

    #[test]
    fn sgd_update_rule() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.5, &tensors());
        let mut p = vec![1.0, 2.0, 3.0];
        opt.step(&mut p, &[0.1, 0.2, 0.3], 0.1);
        assert!((p[0] - (1.0 - 0.1 * (0.1 + 0.5))).abs() < 1e-15);
        assert!((p[2] - (3.0 - 0.1 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut opt = Optimizer::new(OptimizerKind::AdamW, 0.0, &tensors());
        let mut p = vec![0.0; 3];
        opt.step(&mut p, &[2.0, -3.0, 0.5], 0.01);
        for (v, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - s * 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_shape() {
        assert!((learning_rate(1.0, 0, 10, 100) - 0.1).abs() < 1e-15);
        assert_eq!(learning_rate(1.0, 9, 10, 100), 1.0);
        assert_eq!(learning_rate(1.0, 10, 10, 100), 1.0);
        assert!((learning_rate(1.0, 55, 10, 100) - 0.5).abs() < 1e-12);
        assert_eq!(learning_rate(1.0, 5, 10, 10), 0.6);
    }
}
