use super::Op;
use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// Sliding maximum over the last axis of `[B, C, L]`. Ties resolve to the lowest index.
    pub fn maxpool1d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        const OP: &str = "maxpool1d";
        let shape = self.check_rank(OP, input, 3)?.to_vec();
        if window == 0 || stride == 0 {
            return Err(AutodiffError::invalid(OP, "window and stride must be at least 1"));
        }
        let (rows, len) = (shape[0] * shape[1], shape[2]);
        if window > len {
            return Err(AutodiffError::invalid(
                OP,
                format!("window {window} exceeds length {len}"),
            ));
        }
        let lout = (len - window) / stride + 1;
        let x = self.values(input);
        let mut out = Vec::with_capacity(rows * lout);
        let mut argmax = Vec::with_capacity(rows * lout);
        for r in 0..rows {
            let row = &x[r * len..(r + 1) * len];
            for t in 0..lout {
                let start = t * stride;
                let mut best = start;
                for i in start + 1..start + window {
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                out.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![shape[0], shape[1], lout], out),
            Op::MaxPool { input, argmax },
        ))
    }

    /// Mean over the last axis: `[B, C, L] -> [B, C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let shape = self.check_rank("global_avg_pool", input, 3)?.to_vec();
        let len = shape[2];
        let out = self
            .values(input)
            .chunks_exact(len)
            .map(|row| row.iter().sum::<f64>() / len as f64)
            .collect();
        Ok(self.push(
            Tensor::from_parts(vec![shape[0], shape[1]], out),
            Op::GlobalAvgPool { input },
        ))
    }
}

pub(super) fn maxpool_backward(tape: &Tape, input: Var, argmax: &[usize], gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(input) {
        return Vec::new();
    }
    let mut gx = vec![0.0; tape.value(input).numel()];
    for (&i, &g) in argmax.iter().zip(gout) {
        gx[i] += g;
    }
    vec![(input, gx)]
}

pub(super) fn avgpool_backward(tape: &Tape, input: Var, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(input) {
        return Vec::new();
    }
    let len = tape.shape(input)[2];
    let gx = gout
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / len as f64, len))
        .collect();
    vec![(input, gx)]
}
