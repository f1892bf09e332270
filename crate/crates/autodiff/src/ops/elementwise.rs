use super::Op;
use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            let dim = sa
                .iter()
                .zip(sb)
                .position(|(x, y)| x != y)
                .unwrap_or(sa.len().min(sb.len()));
            return Err(AutodiffError::mismatch(
                op,
                format!("dimension {dim}"),
                sa.get(dim).copied().unwrap_or(0),
                sb.get(dim).copied().unwrap_or(0),
            ));
        }
        Ok(sa.to_vec())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("add", a, b)?;
        let out = self.values(a).iter().zip(self.values(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("mul", a, b)?;
        let out = self.values(a).iter().zip(self.values(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Mul { a, b }))
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.values(input).iter().sum();
        self.push(Tensor::scalar(total), Op::Sum { input })
    }

    /// Multiplies each channel row of `[B, C, L]` by the matching entry of `[B, C]`.
    pub fn scale_channels(&mut self, input: Var, scale: Var) -> Result<Var> {
        const OP: &str = "scale_channels";
        let xs = self.check_rank(OP, input, 3)?.to_vec();
        let ss = self.check_rank(OP, scale, 2)?;
        if ss[0] != xs[0] {
            return Err(AutodiffError::mismatch(OP, "batch", xs[0], ss[0]));
        }
        if ss[1] != xs[1] {
            return Err(AutodiffError::mismatch(OP, "channels", xs[1], ss[1]));
        }
        let len = xs[2];
        let s = self.values(scale);
        let out = self
            .values(input)
            .chunks_exact(len)
            .zip(s)
            .flat_map(|(row, &k)| row.iter().map(move |v| v * k))
            .collect();
        Ok(self.push(Tensor::from_parts(xs, out), Op::ScaleChannels { input, scale }))
    }
}

pub(super) fn add_backward(tape: &Tape, a: Var, b: Var, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    [a, b]
        .into_iter()
        .filter(|v| tape.wants_grad(*v))
        .map(|v| (v, gout.to_vec()))
        .collect()
}

pub(super) fn mul_backward(tape: &Tape, a: Var, b: Var, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let mut grads = Vec::with_capacity(2);
    if tape.wants_grad(a) {
        grads.push((a, gout.iter().zip(tape.values(b)).map(|(g, y)| g * y).collect()));
    }
    if tape.wants_grad(b) {
        grads.push((b, gout.iter().zip(tape.values(a)).map(|(g, x)| g * x).collect()));
    }
    grads
}

pub(super) fn sum_backward(tape: &Tape, input: Var, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(input) {
        return Vec::new();
    }
    vec![(input, vec![gout[0]; tape.value(input).numel()])]
}

pub(super) fn scale_channels_backward(tape: &Tape, input: Var, scale: Var, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let len = tape.shape(input)[2];
    let x = tape.values(input);
    let s = tape.values(scale);
    let mut grads = Vec::with_capacity(2);
    if tape.wants_grad(input) {
        let gx = gout
            .chunks_exact(len)
            .zip(s)
            .flat_map(|(row, &k)| row.iter().map(move |g| g * k))
            .collect();
        grads.push((input, gx));
    }
    if tape.wants_grad(scale) {
        let gs = gout
            .chunks_exact(len)
            .zip(x.chunks_exact(len))
            .map(|(g, xr)| g.iter().zip(xr).map(|(a, b)| a * b).sum())
            .collect();
        grads.push((scale, gs));
    }
    grads
}
