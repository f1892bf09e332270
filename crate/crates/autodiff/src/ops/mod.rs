//! Differentiable primitives. Each submodule adds forward methods to [`Tape`]
//! and supplies the matching reverse rule.

mod activation;
mod conv;
mod dropout;
mod elementwise;
mod linear;
mod loss;
mod norm;
mod pool;

pub use conv::{conv1d_output_len, Conv1dSpec};
pub use dropout::DropoutMode;
pub use linear::softmax_rows;
pub use norm::{BatchNormMode, BatchNormOutput, BatchStats, RunningStats};

use crate::tape::{Tape, Var};

pub(crate) enum Op {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: Conv1dSpec,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Swish {
        input: Var,
        gate: Vec<f64>,
    },
    Sigmoid {
        input: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input: Var,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Softmax {
        input: Var,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Sum {
        input: Var,
    },
    ScaleChannels {
        input: Var,
        scale: Var,
    },
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Conv1d {
                input, weight, bias, ..
            }
            | Op::Dense {
                input, weight, bias, ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::BatchNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::Swish { input, .. }
            | Op::Sigmoid { input }
            | Op::Dropout { input, .. }
            | Op::MaxPool { input, .. }
            | Op::GlobalAvgPool { input }
            | Op::Softmax { input }
            | Op::Sum { input } => vec![*input],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::ScaleChannels { input, scale } => vec![*input, *scale],
        }
    }
}

/// Returns the gradient contributions of node `idx` to its inputs.
pub(crate) fn backward(tape: &Tape, idx: usize, upstream: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let node = &tape.nodes[idx];
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Conv1d {
            input,
            weight,
            bias,
            spec,
        } => conv::backward(tape, *input, *weight, *bias, *spec, node.value.shape(), upstream),
        Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => norm::backward(tape, *input, *gamma, *beta, xhat, inv_std, *batch_stats, upstream),
        Op::Swish { input, gate } => activation::swish_backward(tape, *input, gate, upstream),
        Op::Sigmoid { input } => activation::sigmoid_backward(tape, *input, node.value.values(), upstream),
        Op::Dropout { input, mask } => dropout::backward(tape, *input, mask, upstream),
        Op::MaxPool { input, argmax } => pool::maxpool_backward(tape, *input, argmax, upstream),
        Op::GlobalAvgPool { input } => pool::avgpool_backward(tape, *input, upstream),
        Op::Dense { input, weight, bias } => linear::backward(tape, *input, *weight, *bias, upstream),
        Op::Softmax { input } => linear::softmax_backward(tape, *input, node.value.values(), upstream),
        Op::CrossEntropy { logits, labels, probs } => loss::backward(tape, *logits, labels, probs, upstream),
        Op::Add { a, b } => elementwise::add_backward(tape, *a, *b, upstream),
        Op::Mul { a, b } => elementwise::mul_backward(tape, *a, *b, upstream),
        Op::Sum { input } => elementwise::sum_backward(tape, *input, upstream),
        Op::ScaleChannels { input, scale } => elementwise::scale_channels_backward(tape, *input, *scale, upstream),
    }
}
