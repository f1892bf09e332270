use super::Op;
use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// Affine map `input · weightᵀ + bias` for `[B, F]` input and `[O, F]` weight.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        const OP: &str = "dense";
        let xs = self.check_rank(OP, input, 2)?.to_vec();
        let ws = self.check_rank(OP, weight, 2)?.to_vec();
        let (batch, features, outputs) = (xs[0], xs[1], ws[0]);
        if ws[1] != features {
            return Err(AutodiffError::mismatch(OP, "weight in-features", features, ws[1]));
        }
        if let Some(b) = bias {
            let bs = self.check_rank(OP, b, 1)?;
            if bs[0] != outputs {
                return Err(AutodiffError::mismatch(OP, "bias length", outputs, bs[0]));
            }
        }
        let x = self.values(input);
        let w = self.values(weight);
        let bv = bias.map(|b| self.values(b));
        let mut out = vec![0.0; batch * outputs];
        for b in 0..batch {
            let xrow = &x[b * features..(b + 1) * features];
            for o in 0..outputs {
                let wrow = &w[o * features..(o + 1) * features];
                let dot: f64 = xrow.iter().zip(wrow).map(|(a, c)| a * c).sum();
                out[b * outputs + o] = dot + bv.map_or(0.0, |bv| bv[o]);
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![batch, outputs], out),
            Op::Dense { input, weight, bias },
        ))
    }

    /// Row-wise softmax of `[B, K]` with max subtraction.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let shape = self.check_rank("softmax", logits, 2)?.to_vec();
        let out = softmax_rows(self.values(logits), shape[1]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Softmax { input: logits }))
    }
}

/// Numerically stable softmax of each length-`k` row.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|z| (z - max).exp()));
        let total: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|p| *p /= total);
    }
    out
}

pub(super) fn backward(tape: &Tape, input: Var, weight: Var, bias: Option<Var>, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let xs = tape.shape(input);
    let (batch, features) = (xs[0], xs[1]);
    let outputs = tape.shape(weight)[0];
    let x = tape.values(input);
    let w = tape.values(weight);
    let mut grads = Vec::with_capacity(3);
    if tape.wants_grad(input) {
        let mut gx = vec![0.0; x.len()];
        for b in 0..batch {
            for o in 0..outputs {
                let g = gout[b * outputs + o];
                let wrow = &w[o * features..(o + 1) * features];
                for (gxv, wv) in gx[b * features..(b + 1) * features].iter_mut().zip(wrow) {
                    *gxv += g * wv;
                }
            }
        }
        grads.push((input, gx));
    }
    if tape.wants_grad(weight) {
        let mut gw = vec![0.0; w.len()];
        for b in 0..batch {
            let xrow = &x[b * features..(b + 1) * features];
            for o in 0..outputs {
                let g = gout[b * outputs + o];
                for (gwv, xv) in gw[o * features..(o + 1) * features].iter_mut().zip(xrow) {
                    *gwv += g * xv;
                }
            }
        }
        grads.push((weight, gw));
    }
    if let Some(bias) = bias.filter(|b| tape.wants_grad(*b)) {
        let mut gb = vec![0.0; outputs];
        for row in gout.chunks_exact(outputs) {
            gb.iter_mut().zip(row).for_each(|(a, g)| *a += g);
        }
        grads.push((bias, gb));
    }
    grads
}

pub(super) fn softmax_backward(tape: &Tape, input: Var, probs: &[f64], gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(input) {
        return Vec::new();
    }
    let k = tape.shape(input)[1];
    let mut gx = vec![0.0; probs.len()];
    for ((p, g), out) in probs
        .chunks_exact(k)
        .zip(gout.chunks_exact(k))
        .zip(gx.chunks_exact_mut(k))
    {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for i in 0..k {
            out[i] = p[i] * (g[i] - dot);
        }
    }
    vec![(input, gx)]
}
