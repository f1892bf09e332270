//! Uncertainty-threshold rejection and threshold sweeps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{confusion, MetricsError};
use crate::uncertainty::UncertaintyEstimate;

#[derive(Debug, Error, PartialEq)]
pub enum RejectionError {
    #[error("sweep needs at least one record")]
    EmptyInput,
    #[error("invalid threshold grid {0:?}: expected start:stop:step with step > 0 and start <= stop")]
    InvalidGrid(String),
    #[error("threshold {0} must be non-negative")]
    NegativeThreshold(f64),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Which uncertainty the threshold is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    #[default]
    Total,
    Data,
}

impl UncertaintyKind {
    pub fn of(self, estimate: &UncertaintyEstimate) -> f64 {
        match self {
            UncertaintyKind::Total => estimate.total,
            UncertaintyKind::Data => estimate.data,
        }
    }
}

impl FromStr for UncertaintyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "total" => Ok(UncertaintyKind::Total),
            "data" => Ok(UncertaintyKind::Data),
            other => Err(format!("unknown uncertainty kind {other:?} (expected total or data)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RejectionOutcome {
    Accepted { class: usize, uncertainty: f64 },
    Rejected { uncertainty: f64 },
}

impl RejectionOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, RejectionOutcome::Accepted { .. })
    }
}

/// Accepts when the chosen uncertainty is at most `threshold`.
pub fn decide(
    estimate: &UncertaintyEstimate,
    threshold: f64,
    predicted: usize,
    kind: UncertaintyKind,
) -> Result<RejectionOutcome, RejectionError> {
    if !(threshold >= 0.0) {
        return Err(RejectionError::NegativeThreshold(threshold));
    }
    let uncertainty = kind.of(estimate);
    Ok(if uncertainty <= threshold {
        RejectionOutcome::Accepted {
            class: predicted,
            uncertainty,
        }
    } else {
        RejectionOutcome::Rejected { uncertainty }
    })
}

/// Inclusive arithmetic grid `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid {
            start: 0.4,
            stop: 1.5,
            step: 0.05,
        }
    }
}

impl ThresholdGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self, RejectionError> {
        let ok = step > 0.0 && start >= 0.0 && start <= stop && (stop - start) / step < 1e7;
        if ok {
            Ok(ThresholdGrid { start, stop, step })
        } else {
            Err(RejectionError::InvalidGrid(format!("{start}:{stop}:{step}")))
        }
    }

    /// Grid points, snapped to 1e-9 so that decimal steps land on their decimal values.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

impl FromStr for ThresholdGrid {
    type Err = RejectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RejectionError::InvalidGrid(s.to_string());
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [start, stop, step] => ThresholdGrid::new(start, stop, step).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ThresholdGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// One evaluated test record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRecord {
    pub true_label: usize,
    pub predicted: usize,
    pub estimate: UncertaintyEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub accepted: usize,
    pub accept_ratio: f64,
    /// `None` when nothing was accepted.
    pub macro_f1: Option<f64>,
    /// `None` for classes never predicted among accepted records.
    pub per_class_precision: Vec<Option<f64>>,
}

/// Metrics over the records accepted at `threshold`.
pub fn evaluate_threshold(
    records: &[ScoredRecord],
    threshold: f64,
    classes: usize,
    kind: UncertaintyKind,
) -> Result<SweepPoint, RejectionError> {
    if records.is_empty() {
        return Err(RejectionError::EmptyInput);
    }
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for r in records {
        if decide(&r.estimate, threshold, r.predicted, kind)?.is_accepted() {
            truth.push(r.true_label);
            predicted.push(r.predicted);
        }
    }
    let cm = confusion(&truth, &predicted, classes)?;
    let accepted = truth.len();
    Ok(SweepPoint {
        threshold,
        accepted,
        accept_ratio: accepted as f64 / records.len() as f64,
        macro_f1: (accepted > 0).then(|| cm.macro_f1()),
        per_class_precision: cm.per_class_precision(),
    })
}

pub fn sweep(
    records: &[ScoredRecord],
    thresholds: &[f64],
    classes: usize,
    kind: UncertaintyKind,
) -> Result<Vec<SweepPoint>, RejectionError> {
    thresholds
        .iter()
        .map(|&t| evaluate_threshold(records, t, classes, kind))
        .collect()
}
