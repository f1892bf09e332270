use thiserror::Error;

/// Failures raised while recording or differentiating a computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        dim: String,
        expected: usize,
        found: usize,
    },
    #[error("{op}: expected rank {expected}, found shape {found:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        found: Vec<usize>,
    },
    #[error("conv1d: kernel exceeds padded length (kernel {kernel}, padded length {padded})")]
    KernelExceedsPaddedLength { kernel: usize, padded: usize },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("cross_entropy: label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward: loss must be a scalar, found shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tensor: shape {shape:?} holds {expected} values, buffer has {found}")]
    BufferLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
}

impl AutodiffError {
    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        AutodiffError::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn mismatch(op: &'static str, dim: impl Into<String>, expected: usize, found: usize) -> Self {
        AutodiffError::ShapeMismatch {
            op,
            dim: dim.into(),
            expected,
            found,
        }
    }
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
