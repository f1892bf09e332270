//! Monte Carlo dropout sampling and the entropy decomposition
//! `total = H(mean row)`, `data = mean H(row)`, `model = total - data`.

use ecg_unc_autodiff::Tensor;
use rayon::prelude::*;
use thiserror::Error;

use crate::net::{ModelMode, NetError, Network};
use crate::seed::rng_from_seed;

/// Rows whose sums are off by at most this much are renormalized.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Raw model uncertainty in `[-CLAMP_TOLERANCE, 0)` is reported as zero.
pub const CLAMP_TOLERANCE: f64 = 1e-9;
/// Raw model uncertainty below `-FAILURE_TOLERANCE` means the entropy code is broken.
pub const FAILURE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("probability matrix needs at least one pass and two classes, got {passes} x {classes}")]
    EmptyMatrix { passes: usize, classes: usize },
    #[error("probability matrix has {found} entries, expected {passes} x {classes}")]
    Ragged {
        passes: usize,
        classes: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: invalid probability {value}")]
    InvalidEntry { row: usize, column: usize, value: f64 },
    #[error("row {row} sums to {sum}")]
    BadRowSum { row: usize, sum: f64 },
    #[error("model uncertainty {raw} is negative beyond tolerance")]
    NegativeModelUncertainty { raw: f64 },
    #[error("pass count must be at least 1")]
    NoPasses,
    #[error(transparent)]
    Network(#[from] NetError),
}

/// `passes x classes` softmax outputs for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    probs: Vec<f64>,
    passes: usize,
    classes: usize,
}

impl McPrediction {
    /// Validates entries and row sums, renormalizing rows that are off by at most 1e-9.
    pub fn new(mut probs: Vec<f64>, passes: usize, classes: usize) -> Result<Self, UncertaintyError> {
        if passes == 0 || classes < 2 {
            return Err(UncertaintyError::EmptyMatrix { passes, classes });
        }
        if probs.len() != passes * classes {
            return Err(UncertaintyError::Ragged {
                passes,
                classes,
                found: probs.len(),
            });
        }
        for (row, values) in probs.chunks_exact_mut(classes).enumerate() {
            check_distribution(values, row)?;
            let sum: f64 = values.iter().sum();
            if sum != 1.0 {
                values.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(McPrediction { probs, passes, classes })
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, pass: usize) -> &[f64] {
        &self.probs[pass * self.classes..(pass + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.classes)
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }

    /// Column-wise mean over passes.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.classes];
        for row in self.rows() {
            for (m, &p) in mean.iter_mut().zip(row) {
                *m += p;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.passes as f64);
        mean
    }

    /// Argmax of the mean row, lowest index on ties.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.mean_row())
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_distribution(p: &[f64], row: usize) -> Result<(), UncertaintyError> {
    for (column, &value) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(UncertaintyError::InvalidEntry { row, column, value });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(UncertaintyError::BadRowSum { row, sum });
    }
    Ok(())
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Natural-log entropy with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64, UncertaintyError> {
    check_distribution(p, 0)?;
    Ok(entropy_unchecked(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyEstimate {
    pub total: f64,
    pub data: f64,
    pub model: f64,
    /// `total - data` before clamping.
    pub model_raw: f64,
}

pub fn total_uncertainty(mc: &McPrediction) -> f64 {
    entropy_unchecked(&mc.mean_row())
}

pub fn data_uncertainty(mc: &McPrediction) -> f64 {
    mc.rows().map(entropy_unchecked).sum::<f64>() / mc.passes as f64
}

pub fn model_uncertainty(mc: &McPrediction) -> Result<f64, UncertaintyError> {
    Ok(decompose(mc)?.model)
}

pub fn decompose(mc: &McPrediction) -> Result<UncertaintyEstimate, UncertaintyError> {
    let total = total_uncertainty(mc);
    let data = data_uncertainty(mc);
    let model_raw = total - data;
    if model_raw < -FAILURE_TOLERANCE {
        return Err(UncertaintyError::NegativeModelUncertainty { raw: model_raw });
    }
    let model = if (-CLAMP_TOLERANCE..0.0).contains(&model_raw) {
        0.0
    } else {
        model_raw
    };
    Ok(UncertaintyEstimate {
        total,
        data,
        model,
        model_raw,
    })
}

/// Runs `passes` stochastic forward passes over `batch` (`[B, leads, length]`); pass `i`
/// draws its dropout masks from a generator seeded with `base_seed + i`. Passes may run in
/// parallel; results are assembled in pass order.
pub fn mc_sample(
    network: &Network,
    batch: &Tensor,
    passes: usize,
    base_seed: u64,
) -> Result<Vec<McPrediction>, UncertaintyError> {
    if passes == 0 {
        return Err(UncertaintyError::NoPasses);
    }
    let outputs: Vec<Tensor> = (0..passes)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(base_seed.wrapping_add(i as u64));
            network.predict_proba(batch, ModelMode::EvalMcDropout, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let records = batch.shape()[0];
    let classes = network.config().num_classes;
    (0..records)
        .map(|r| {
            let mut probs = Vec::with_capacity(passes * classes);
            for out in &outputs {
                probs.extend_from_slice(&out.values()[r * classes..(r + 1) * classes]);
            }
            McPrediction::new(probs, passes, classes)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(rows: &[&[f64]]) -> McPrediction {
        let k = rows[0].len();
        McPrediction::new(rows.concat(), rows.len(), k).unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[1.0 / 9.0; 9]).unwrap() - 9f64.ln()).abs() < 1e-12);
        assert!((entropy(&[0.5, 0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(entropy(&[0.7, 0.7]).is_err());
        assert!(entropy(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn disagreement_is_model_uncertainty() {
        let e = decompose(&mc(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!((e.total - 2f64.ln()).abs() < 1e-15);
        assert_eq!(e.data, 0.0);
        assert!((e.model - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_have_no_model_uncertainty() {
        let row: &[f64] = &[0.2, 0.3, 0.5];
        let e = decompose(&mc(&[row; 4])).unwrap();
        assert!(e.model.abs() < 1e-15);
        let row: &[f64] = &[0.0, 1.0];
        let e = decompose(&mc(&[row; 3])).unwrap();
        assert_eq!((e.total, e.data, e.model), (0.0, 0.0, 0.0));
        let u = [1.0 / 4.0; 4];
        let e = decompose(&mc(&[&u, &u])).unwrap();
        assert!((e.total - 4f64.ln()).abs() < 1e-15);
        assert!((e.data - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rows_renormalized_within_tolerance() {
        let m = McPrediction::new(vec![0.5 + 4e-10, 0.5], 1, 2).unwrap();
        assert!((m.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            McPrediction::new(vec![0.5 + 1e-8, 0.5], 1, 2),
            Err(UncertaintyError::BadRowSum { .. })
        ));
        assert!(McPrediction::new(vec![0.5, 0.5, 1.0], 1, 2).is_err());
        assert!(McPrediction::new(vec![f64::NAN, 1.0], 1, 2).is_err());
    }

    #[test]
    fn prediction_ties_go_to_lowest_index() {
        let m = mc(&[&[0.4, 0.4, 0.2], &[0.3, 0.3, 0.4]]);
        assert_eq!(m.predicted_class(), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }
}
