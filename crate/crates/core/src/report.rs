//! Per-class uncertainty summary: mean uncertainties, F1, Welch tests of wrong versus
//! correct predictions and the model/data uncertainty correlation.

use std::fmt::Write as _;
use std::io::Write;

use crate::evaluate::RecordResult;
use crate::metrics::{confusion, MetricsError};
use crate::stats::{pearson, welch_t, Alternative, PearsonResult, WelchResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub name: String,
    pub records: usize,
    pub wrong: usize,
    pub mean_data: Option<f64>,
    pub mean_model: Option<f64>,
    /// Per-class F1, or Macro-F1 on the overall row.
    pub performance: f64,
    /// One-sided, wrong greater than correct. `None` when a group has fewer than two
    /// records or both groups are constant.
    pub welch_data: Option<WelchResult>,
    pub welch_model: Option<WelchResult>,
    /// Model versus data uncertainty.
    pub pearson: Option<PearsonResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    /// One row per class followed by the overall row.
    pub rows: Vec<ClassSummary>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(name: &str, rows: &[&RecordResult], performance: f64) -> ClassSummary {
    let data: Vec<f64> = rows.iter().map(|r| r.estimate.data).collect();
    let model: Vec<f64> = rows.iter().map(|r| r.estimate.model).collect();
    let split = |pick: fn(&RecordResult) -> f64| {
        let (wrong, right): (Vec<&RecordResult>, Vec<&RecordResult>) = rows.iter().partition(|r| !r.is_correct());
        let wrong: Vec<f64> = wrong.into_iter().map(pick).collect();
        let right: Vec<f64> = right.into_iter().map(pick).collect();
        welch_t(&wrong, &right, Alternative::AGreater).ok()
    };
    ClassSummary {
        name: name.to_string(),
        records: rows.len(),
        wrong: rows.iter().filter(|r| !r.is_correct()).count(),
        mean_data: mean(&data),
        mean_model: mean(&model),
        performance,
        welch_data: split(|r| r.estimate.data),
        welch_model: split(|r| r.estimate.model),
        pearson: pearson(&model, &data).ok(),
    }
}

impl UncertaintyReport {
    /// Rows are grouped by true label.
    pub fn build(results: &[RecordResult], class_names: &[&str]) -> Result<Self, MetricsError> {
        let classes = class_names.len();
        let truth: Vec<usize> = results.iter().map(|r| r.true_label).collect();
        let predicted: Vec<usize> = results.iter().map(|r| r.predicted).collect();
        let cm = confusion(&truth, &predicted, classes)?;
        let f1 = cm.per_class_f1();
        let mut rows: Vec<ClassSummary> = class_names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let members: Vec<&RecordResult> = results.iter().filter(|r| r.true_label == k).collect();
                summarize(name, &members, f1[k])
            })
            .collect();
        let all: Vec<&RecordResult> = results.iter().collect();
        rows.push(summarize("Overall", &all, cm.macro_f1()));
        Ok(UncertaintyReport { rows })
    }

    pub fn overall(&self) -> &ClassSummary {
        self.rows.last().expect("report always has an overall row")
    }

    const HEADER: [&'static str; 11] = [
        "class",
        "records",
        "wrong",
        "mean_data_uncertainty",
        "mean_model_uncertainty",
        "performance",
        "welch_p_data",
        "welch_p_model",
        "pearson_r",
        "pearson_p",
        "welch_dof_data",
    ];

    fn cells(row: &ClassSummary) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let p = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        vec![
            row.name.clone(),
            row.records.to_string(),
            row.wrong.to_string(),
            opt(row.mean_data),
            opt(row.mean_model),
            format!("{:.6}", row.performance),
            p(row.welch_data.map(|w| w.p_value)),
            p(row.welch_model.map(|w| w.p_value)),
            opt(row.pearson.map(|c| c.r)),
            p(row.pearson.map(|c| c.p_two_sided)),
            opt(row.welch_data.map(|w| w.dof)),
        ]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::HEADER)?;
        for row in &self.rows {
            w.write_record(Self::cells(row))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table; missing values print as `-`.
    pub fn to_text(&self) -> String {
        let table: Vec<Vec<String>> = std::iter::once(Self::HEADER.iter().map(|s| s.to_string()).collect())
            .chain(self.rows.iter().map(|r| {
                Self::cells(r)
                    .into_iter()
                    .map(|c| if c.is_empty() { "-".to_string() } else { c })
                    .collect()
            }))
            .collect();
        let widths: Vec<usize> = (0..Self::HEADER.len())
            .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, &w))| {
                    if i == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::UncertaintyEstimate;

    fn result(true_label: usize, predicted: usize, data: f64, model: f64) -> RecordResult {
        RecordResult {
            id: format!("r{true_label}{predicted}{data}"),
            true_label,
            predicted,
            estimate: UncertaintyEstimate {
                total: data + model,
                data,
                model,
                model_raw: model,
            },
        }
    }

    #[test]
    fn layout_and_overall_row() {
        let results = vec![
            result(0, 0, 0.1, 0.01),
            result(0, 0, 0.2, 0.02),
            result(0, 1, 0.9, 0.2),
            result(0, 1, 1.0, 0.3),
            result(1, 1, 0.1, 0.01),
            result(1, 1, 0.15, 0.03),
        ];
        let report = UncertaintyReport::build(&results, &["A", "B", "C"]).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.overall().name, "Overall");
        assert_eq!(report.overall().records, 6);
        assert!(report.rows[0].welch_data.unwrap().p_value < 0.05);
        assert!(report.rows[1].welch_data.is_none());
        assert!(report.rows[2].mean_data.is_none());
        assert!((report.rows[0].mean_data.unwrap() - 0.55).abs() < 1e-12);
        let text = report.to_text();
        assert_eq!(text.lines().count(), 5);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }
}
