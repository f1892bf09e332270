use super::Op;
use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// Mean over the batch of `-log softmax(logits)[label]`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        const OP: &str = "cross_entropy";
        let shape = self.check_rank(OP, logits, 2)?.to_vec();
        let (batch, k) = (shape[0], shape[1]);
        if labels.len() != batch {
            return Err(AutodiffError::mismatch(OP, "label count", batch, labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(AutodiffError::LabelOutOfRange { label, classes: k });
        }
        let z = self.values(logits);
        let mut probs = Vec::with_capacity(z.len());
        let mut total = 0.0;
        for (row, &label) in z.chunks_exact(k).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum_exp.ln();
            total += lse - row[label];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let loss = total / batch as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }
}

pub(super) fn backward(
    tape: &Tape,
    logits: Var,
    labels: &[usize],
    probs: &[f64],
    gout: &[f64],
) -> Vec<(Var, Vec<f64>)> {
    if !tape.wants_grad(logits) {
        return Vec::new();
    }
    let k = tape.shape(logits)[1];
    let scale = gout[0] / labels.len() as f64;
    let mut gx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
    for (b, &label) in labels.iter().enumerate() {
        gx[b * k + label] -= scale;
    }
    vec![(logits, gx)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[3, 9]));
        let l = tape.cross_entropy(z, &[0, 4, 8]).unwrap();
        assert!((tape.values(l)[0] - 9f64.ln()).abs() < 1e-12);
        assert!((tape.values(l)[0] - 2.197225).abs() < 1e-6);
    }

    #[test]
    fn peaked_logits_give_vanishing_loss() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::new(vec![1, 3], vec![0.0, 800.0, 0.0]).unwrap());
        let l = tape.cross_entropy(z, &[1]).unwrap();
        assert_eq!(tape.values(l)[0], 0.0);
    }

    #[test]
    fn gradient_is_softmax_minus_onehot_over_batch() {
        let mut tape = Tape::new();
        let z = tape.param(Tensor::new(vec![2, 2], vec![0.0, 3f64.ln(), 1.0, 1.0]).unwrap());
        let l = tape.cross_entropy(z, &[1, 0]).unwrap();
        tape.backward(l).unwrap();
        let g = tape.grad(z).unwrap();
        let expected = [0.25 / 2.0, (0.75 - 1.0) / 2.0, (0.5 - 1.0) / 2.0, 0.5 / 2.0];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_label() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[1, 3]));
        assert_eq!(
            tape.cross_entropy(z, &[3]).unwrap_err(),
            AutodiffError::LabelOutOfRange { label: 3, classes: 3 }
        );
    }
}
