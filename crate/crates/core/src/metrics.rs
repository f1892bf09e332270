//! Confusion matrices and one-vs-rest F1 scores.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class count must be positive")]
    NoClasses,
}

/// Counts with rows = true class and columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

/// Row-normalized confusion matrix (per-class recall on the diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct RowNormalized {
    pub fractions: Vec<Vec<f64>>,
    /// `true` where the row had no records and was left at zero.
    pub empty_rows: Vec<bool>,
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if classes == 0 {
        return Err(MetricsError::NoClasses);
    }
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut counts = vec![0u64; classes * classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= classes {
                return Err(MetricsError::LabelOutOfRange { label, classes });
            }
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn column_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.count(t, predicted)).sum()
    }

    pub fn row_normalize(&self) -> RowNormalized {
        let mut fractions = Vec::with_capacity(self.classes);
        let mut empty_rows = Vec::with_capacity(self.classes);
        for t in 0..self.classes {
            let row = self.row(t);
            let sum: u64 = row.iter().sum();
            empty_rows.push(sum == 0);
            fractions.push(if sum == 0 {
                vec![0.0; self.classes]
            } else {
                row.iter().map(|&c| c as f64 / sum as f64).collect()
            });
        }
        RowNormalized { fractions, empty_rows }
    }

    /// `2TP / (2TP + FP + FN)`; zero when the class never occurs in truth or predictions.
    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let tp = self.count(c, c);
                let fp = self.column_sum(c) - tp;
                let fnn = self.row(c).iter().sum::<u64>() - tp;
                let denom = 2 * tp + fp + fnn;
                if denom == 0 {
                    0.0
                } else {
                    (2 * tp) as f64 / denom as f64
                }
            })
            .collect()
    }

    /// Precision per class; `None` when the class was never predicted.
    pub fn per_class_precision(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let predicted = self.column_sum(c);
                (predicted > 0).then(|| self.count(c, c) as f64 / predicted as f64)
            })
            .collect()
    }

    /// Recall per class; `None` when the class is absent from the truth.
    pub fn per_class_recall(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let actual: u64 = self.row(c).iter().sum();
                (actual > 0).then(|| self.count(c, c) as f64 / actual as f64)
            })
            .collect()
    }

    /// Unweighted mean of [`ConfusionMatrix::per_class_f1`] over all classes.
    pub fn macro_f1(&self) -> f64 {
        self.per_class_f1().iter().sum::<f64>() / self.classes as f64
    }
}

pub fn macro_f1(truth: &[usize], predicted: &[usize], classes: usize) -> Result<f64, MetricsError> {
    Ok(confusion(truth, predicted, classes)?.macro_f1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let cm = confusion(&y, &y, 3).unwrap();
        assert_eq!(cm.macro_f1(), 1.0);
        let n = cm.row_normalize();
        for (i, row) in n.fractions.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn single_miss() {
        let cm = confusion(&[0], &[1], 3).unwrap();
        assert_eq!(cm.count(0, 1), 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.row_normalize().empty_rows, vec![false, true, true]);
    }

    #[test]
    fn two_by_two_reference() {
        // counts [[2,1],[0,3]]
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [0, 0, 1, 1, 1, 1];
        let cm = confusion(&truth, &pred, 2).unwrap();
        let f1 = cm.per_class_f1();
        assert!((f1[0] - 0.8).abs() < 1e-12);
        assert!((f1[1] - 6.0 / 7.0).abs() < 1e-12);
        assert!((cm.macro_f1() - 0.828_571).abs() < 1e-6);
    }

    #[test]
    fn absent_class_still_divides() {
        let f = macro_f1(&[0, 1], &[0, 1], 3).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn row_of_twos() {
        let cm = confusion(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(cm.row_normalize().fractions[0], vec![0.5, 0.5]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            confusion(&[0], &[0, 1], 2),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            confusion(&[0], &[2], 2),
            Err(MetricsError::LabelOutOfRange { label: 2, classes: 2 })
        );
        assert_eq!(confusion(&[], &[], 0), Err(MetricsError::NoClasses));
    }
}
