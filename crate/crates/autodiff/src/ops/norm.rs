use super::Op;
use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize by the statistics of the current batch.
    Train,
    /// Normalize by the running statistics.
    Eval,
}

/// Per-channel running mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Exponential moving average: `running <- (1 - momentum) * running + momentum * batch`.
    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.unbiased_var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}

/// Statistics observed on one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub unbiased_var: Vec<f64>,
}

pub struct BatchNormOutput {
    pub output: Var,
    /// Present in [`BatchNormMode::Train`]; feed it to [`RunningStats::update`].
    pub batch_stats: Option<BatchStats>,
}

impl Tape {
    /// Per-channel normalization of `[B, C, L]`, followed by the affine `gamma * x + beta`.
    pub fn batchnorm1d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &RunningStats,
        mode: BatchNormMode,
        epsilon: f64,
    ) -> Result<BatchNormOutput> {
        const OP: &str = "batchnorm1d";
        if !(epsilon > 0.0) {
            return Err(AutodiffError::invalid(
                OP,
                format!("epsilon must be positive, got {epsilon}"),
            ));
        }
        let shape = self.check_rank(OP, input, 3)?.to_vec();
        let (batch, channels, len) = (shape[0], shape[1], shape[2]);
        for (name, var) in [("gamma", gamma), ("beta", beta)] {
            let s = self.check_rank(OP, var, 1)?;
            if s[0] != channels {
                return Err(AutodiffError::mismatch(OP, format!("{name} length"), channels, s[0]));
            }
        }
        if running.channels() != channels {
            return Err(AutodiffError::mismatch(
                OP,
                "running stats channels",
                channels,
                running.channels(),
            ));
        }
        let count = batch * len;
        if mode == BatchNormMode::Train && count < 2 {
            return Err(AutodiffError::invalid(
                OP,
                format!("training mode needs at least 2 values per channel, got {count}"),
            ));
        }

        let x = self.values(input);
        let (mean, var) = match mode {
            BatchNormMode::Train => channel_moments(x, batch, channels, len),
            BatchNormMode::Eval => (running.mean.clone(), running.var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
        let g = self.values(gamma);
        let bt = self.values(beta);
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for b in 0..batch {
            for c in 0..channels {
                let base = (b * channels + c) * len;
                for i in base..base + len {
                    let h = (x[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = g[c] * h + bt[c];
                }
            }
        }
        let batch_stats = (mode == BatchNormMode::Train).then(|| {
            let scale = count as f64 / (count - 1) as f64;
            BatchStats {
                unbiased_var: var.iter().map(|v| v * scale).collect(),
                mean,
            }
        });
        let output = self.push(
            Tensor::from_parts(shape, out),
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: mode == BatchNormMode::Train,
            },
        );
        Ok(BatchNormOutput { output, batch_stats })
    }
}

/// Mean and biased variance per channel over batch and length.
fn channel_moments(x: &[f64], batch: usize, channels: usize, len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (batch * len) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for c in 0..channels {
        let mut s = 0.0;
        for b in 0..batch {
            let base = (b * channels + c) * len;
            s += x[base..base + len].iter().sum::<f64>();
        }
        let m = s / n;
        let mut ss = 0.0;
        for b in 0..batch {
            let base = (b * channels + c) * len;
            ss += x[base..base + len].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        mean[c] = m;
        var[c] = ss / n;
    }
    (mean, var)
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward(
    tape: &Tape,
    input: Var,
    gamma: Var,
    beta: Var,
    xhat: &[f64],
    inv_std: &[f64],
    batch_stats: bool,
    gout: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    let shape = tape.shape(input);
    let (batch, channels, len) = (shape[0], shape[1], shape[2]);
    let g = tape.values(gamma);
    let mut sum_g = vec![0.0; channels];
    let mut sum_gx = vec![0.0; channels];
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * len;
            for i in base..base + len {
                sum_g[c] += gout[i];
                sum_gx[c] += gout[i] * xhat[i];
            }
        }
    }
    let mut grads = Vec::with_capacity(3);
    if tape.wants_grad(input) {
        let n = (batch * len) as f64;
        let mut gx = vec![0.0; gout.len()];
        for b in 0..batch {
            for c in 0..channels {
                let base = (b * channels + c) * len;
                let k = g[c] * inv_std[c];
                for i in base..base + len {
                    gx[i] = if batch_stats {
                        k * (gout[i] - sum_g[c] / n - xhat[i] * sum_gx[c] / n)
                    } else {
                        k * gout[i]
                    };
                }
            }
        }
        grads.push((input, gx));
    }
    if tape.wants_grad(gamma) {
        grads.push((gamma, sum_gx));
    }
    if tape.wants_grad(beta) {
        grads.push((beta, sum_g));
    }
    grads
}
