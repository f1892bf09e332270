//! ECG arrhythmia classification with Monte Carlo dropout uncertainty.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod evaluate;
pub mod metrics;
pub mod net;
pub mod rejection;
pub mod report;
pub mod seed;
pub mod stats;
pub mod train;
pub mod uncertainty;
