//! ECG records, synthetic generation, fixed-length conditioning and the ECGD container.

mod condition;
mod container;
mod synth;

pub use condition::{condition_length, make_batch, CropMode};
pub use container::{load_dataset, read_dataset, save_dataset, write_dataset, write_manifest_csv, DataError};
pub use synth::{
    generate, read_truth_csv, write_truth_csv, BundleSide, ClassMorphology, GroundTruth, NoiseConfig, Signature,
    SynthConfig, SynthOutput,
};

pub const LEAD_COUNT: usize = 12;
pub const SAMPLE_RATE: f64 = 500.0;
pub const CLASS_COUNT: usize = 9;

/// Diagnostic classes in label order.
pub const CLASS_NAMES: [&str; CLASS_COUNT] = ["Normal", "AF", "I-AVB", "LBBB", "RBBB", "PAC", "PVC", "STD", "STE"];

/// One multi-lead recording, samples stored lead-major as `f32` millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub id: String,
    pub label: u8,
    leads: usize,
    samples: Vec<f32>,
}

impl EcgRecord {
    /// `samples.len()` must be a multiple of `leads`.
    pub fn new(id: impl Into<String>, label: u8, leads: usize, samples: Vec<f32>) -> Option<Self> {
        (leads > 0 && samples.len().is_multiple_of(leads)).then(|| EcgRecord {
            id: id.into(),
            label,
            leads,
            samples,
        })
    }

    pub fn lead_count(&self) -> usize {
        self.leads
    }

    /// Samples per lead.
    pub fn len(&self) -> usize {
        self.samples.len() / self.leads
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / SAMPLE_RATE
    }

    pub fn lead(&self, index: usize) -> &[f32] {
        let n = self.len();
        &self.samples[index * n..(index + 1) * n]
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<EcgRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label as usize).collect()
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}
