use rand::Rng;

use super::Op;
use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Active,
    Inactive,
}

impl Tape {
    /// Inverted dropout: survivors are scaled by `1 / (1 - p)`.
    ///
    /// Inactive mode and `p == 0` are the identity and draw nothing from `rng`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, p: f64, mode: DropoutMode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::invalid(
                "dropout",
                format!("probability {p} outside [0, 1)"),
            ));
        }
        let n = self.value(input).numel();
        let mask = if mode == DropoutMode::Inactive || p == 0.0 {
            vec![1.0; n]
        } else {
            let keep = 1.0 / (1.0 - p);
            (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect()
        };
        let value = self.value(input);
        let out = value.values().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = value.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), Op::Dropout { input, mask }))
    }
}

pub(super) fn backward(tape: &Tape, input: Var, mask: &[f64], gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(input) {
        return Vec::new();
    }
    vec![(input, gout.iter().zip(mask).map(|(g, m)| g * m).collect())]
}
