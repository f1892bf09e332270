//! Wengert-list recording of forward operations and their reverse sweep.

use crate::error::{AutodiffError, Result};
use crate::ops::{self, Op};
use crate::tensor::Tensor;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
}

/// Records operations in execution order so gradients can be replayed in reverse.
///
/// A tape is single-use per forward pass: build a fresh one for every evaluation.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Its `requires_grad` flag decides whether a gradient is kept.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf)
    }

    /// Records a trainable leaf (gradient tracked).
    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn values(&self, var: Var) -> &[f64] {
        self.nodes[var.0].value.values()
    }

    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.nodes[var.0].value.grad()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].value.requires_grad()
    }

    pub(crate) fn push(&mut self, mut value: Tensor, op: Op) -> Var {
        if !matches!(op, Op::Leaf) {
            let tracked = op.inputs().iter().any(|v| self.nodes[v.0].value.requires_grad());
            value.set_requires_grad(tracked);
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Populates gradients of every tracked tensor reachable from `loss`.
    ///
    /// Gradients accumulate: a tensor used several times receives the sum of its uses,
    /// and calling `backward` twice adds the second sweep on top of the first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        if !loss_value.requires_grad() {
            return Ok(());
        }
        self.nodes[loss.0].value.accumulate_grad(&[1.0]);

        for idx in (0..=loss.0).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) || !self.nodes[idx].value.requires_grad() {
                continue;
            }
            let Some(upstream) = self.nodes[idx].value.take_grad() else {
                continue;
            };
            let contributions = ops::backward(self, idx, &upstream);
            self.nodes[idx].value.restore_grad(Some(upstream));
            for (target, grad) in contributions {
                self.nodes[target.0].value.accumulate_grad_owned(grad);
            }
        }
        Ok(())
    }

    /// True when the recorded input wants a gradient contribution.
    pub(crate) fn wants_grad(&self, var: Var) -> bool {
        self.nodes[var.0].value.requires_grad()
    }

    pub(crate) fn check_rank(&self, op: &'static str, var: Var, rank: usize) -> Result<&[usize]> {
        let shape = self.shape(var);
        if shape.len() != rank {
            return Err(AutodiffError::RankMismatch {
                op,
                expected: rank,
                found: shape.to_vec(),
            });
        }
        Ok(shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn repeated_use_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.add(x, x).unwrap();
        let z = tape.add(y, x).unwrap();
        let s = tape.sum(z);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0; 3]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 2]));
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, AutodiffError::NonScalarLoss { .. }));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::filled(&[2], 3.0));
        let x = tape.param(Tensor::filled(&[2], 1.0));
        let y = tape.mul(c, x).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 3.0]);
    }
}
