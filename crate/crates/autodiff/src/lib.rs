//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Operations are recorded on a [`Tape`] as they run; [`Tape::backward`] walks the
//! record in reverse and accumulates gradients into every tensor that asked for one.
//! The primitive set is exactly what a 1-D residual convolutional classifier needs:
//! grouped convolution, batch normalization, Swish, inverted dropout, max and
//! average pooling, dense layers, softmax and cross-entropy.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, GradCheckReport};
pub use ops::{conv1d_output_len, BatchNormMode, BatchNormOutput, BatchStats, Conv1dSpec, DropoutMode, RunningStats};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Stable row-wise softmax over rows of length `k`.
pub use ops::softmax_rows;
