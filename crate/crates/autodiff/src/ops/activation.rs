use super::Op;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    /// Elementwise `x * sigmoid(x)`.
    pub fn swish(&mut self, input: Var) -> Var {
        let value = self.value(input);
        let gate: Vec<f64> = value.values().iter().map(|&x| sigmoid(x)).collect();
        let out = value.values().iter().zip(&gate).map(|(&x, &s)| x * s).collect();
        let shape = value.shape().to_vec();
        let gate = if self.requires_grad(input) { gate } else { Vec::new() };
        self.push(Tensor::from_parts(shape, out), Op::Swish { input, gate })
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let value = self.value(input);
        let out = value.values().iter().map(|&x| sigmoid(x)).collect();
        let shape = value.shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Sigmoid { input })
    }
}

pub(super) fn swish_backward(tape: &Tape, input: Var, gate: &[f64], gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(input) {
        return Vec::new();
    }
    let gx = tape
        .values(input)
        .iter()
        .zip(gate)
        .zip(gout)
        .map(|((&x, &s), &g)| g * (s + x * s * (1.0 - s)))
        .collect();
    vec![(input, gx)]
}

pub(super) fn sigmoid_backward(tape: &Tape, input: Var, out: &[f64], gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(input) {
        return Vec::new();
    }
    let gx = out.iter().zip(gout).map(|(&s, &g)| g * s * (1.0 - s)).collect();
    vec![(input, gx)]
}
