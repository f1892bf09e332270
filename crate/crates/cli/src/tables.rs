//! CSV files exchanged between commands. Floats are written in shortest round-trip form
//! so re-reading them reproduces the exact values.

use std::io::{Read, Write};

use ecg_unc_core::evaluate::RecordResult;
use ecg_unc_core::metrics::ConfusionMatrix;
use ecg_unc_core::rejection::SweepPoint;
use ecg_unc_core::uncertainty::UncertaintyEstimate;
use serde::{Deserialize, Serialize};

pub const UNCERTAINTY_FILE: &str = "uncertainty.csv";

#[derive(Debug, Serialize, Deserialize)]
struct UncertaintyRow {
    record_id: String,
    true_label: usize,
    pred_label: usize,
    total_u: f64,
    data_u: f64,
    model_u: f64,
}

pub fn write_uncertainty<W: Write>(results: &[RecordResult], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in results {
        w.serialize(UncertaintyRow {
            record_id: r.id.clone(),
            true_label: r.true_label,
            pred_label: r.predicted,
            total_u: r.estimate.total,
            data_u: r.estimate.data,
            model_u: r.estimate.model,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// The clamped model value stands in for the raw one, which is not stored.
pub fn read_uncertainty<R: Read>(reader: R) -> csv::Result<Vec<RecordResult>> {
    csv::Reader::from_reader(reader)
        .deserialize::<UncertaintyRow>()
        .map(|row| {
            row.map(|r| RecordResult {
                id: r.record_id,
                true_label: r.true_label,
                predicted: r.pred_label,
                estimate: UncertaintyEstimate {
                    total: r.total_u,
                    data: r.data_u,
                    model: r.model_u,
                    model_raw: r.model_u,
                },
            })
        })
        .collect()
}

/// Counts with true classes as rows.
pub fn write_confusion<W: Write>(cm: &ConfusionMatrix, class_names: &[&str], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(class_names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (t, name) in class_names.iter().enumerate() {
        let mut row = vec![name.to_string()];
        row.extend(cm.row(t).iter().map(u64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(points: &[SweepPoint], class_names: &[&str], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["threshold", "accepted", "accept_ratio", "macro_f1"]
        .map(String::from)
        .to_vec();
    header.extend(class_names.iter().map(|n| format!("precision_{n}")));
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![
            p.threshold.to_string(),
            p.accepted.to_string(),
            p.accept_ratio.to_string(),
            p.macro_f1.map(|f| f.to_string()).unwrap_or_default(),
        ];
        row.extend(
            p.per_class_precision
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncertainty_rows_round_trip_exactly() {
        let results = vec![RecordResult {
            id: "rec00001".into(),
            true_label: 3,
            predicted: 5,
            estimate: UncertaintyEstimate {
                total: 0.1 + 0.2,
                data: std::f64::consts::LN_2 / 3.0,
                model: 0.0,
                model_raw: 0.0,
            },
        }];
        let mut buf = Vec::new();
        write_uncertainty(&results, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("record_id,true_label,pred_label,total_u,data_u,model_u\n"));
        assert_eq!(read_uncertainty(&buf[..]).unwrap(), results);
    }
}
