use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::net::Parameter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if unit(self.beta1) && unit(self.beta2) && self.epsilon > 0.0 {
            Ok(())
        } else {
            Err("adam betas must lie in [0, 1) and epsilon must be positive".into())
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Parameter]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        AdamState {
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// One Adam update with bias correction. Decoupled weight decay
    /// `theta <- theta - lr * weight_decay * theta` is applied first, only to
    /// parameters flagged for decay.
    pub fn step(
        &mut self,
        params: &mut [Parameter],
        grads: &[Vec<f64>],
        lr: f64,
        weight_decay: f64,
        config: &AdamConfig,
    ) -> Result<(), TrainError> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(TrainError::GradientShape {
                name: "<parameter list>".into(),
                expected: self.first.len(),
                found: grads.len().min(params.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.value.numel() != g.len() || m.len() != g.len() {
                return Err(TrainError::GradientShape {
                    name: p.name.clone(),
                    expected: p.value.numel(),
                    found: g.len(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - config.beta1.powi(t);
        let correction2 = 1.0 - config.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            let decay = if p.decay { lr * weight_decay } else { 0.0 };
            for (((theta, &grad), mi), vi) in p
                .value
                .values_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = config.beta1 * *mi + (1.0 - config.beta1) * grad;
                *vi = config.beta2 * *vi + (1.0 - config.beta2) * grad * grad;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *theta -= decay * *theta;
                *theta -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` when the monitored metric has not reached a
/// new best for `patience` steps; the wait restarts after every reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    best: Option<f64>,
    anchor: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            best: None,
            anchor: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records the metric observed after optimizer step `step` and returns the new rate.
    pub fn observe(&mut self, step: usize, metric: f64) -> f64 {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.anchor = step;
        } else if step.saturating_sub(self.anchor) >= self.patience {
            self.lr *= self.factor;
            self.anchor = step;
        }
        self.lr
    }
}
