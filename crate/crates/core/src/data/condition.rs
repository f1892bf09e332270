use ecg_unc_autodiff::Tensor;
use rand::Rng;

use super::EcgRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    /// Uniformly random window (training augmentation).
    TrainRandomCrop,
    /// Window starting at `(len - target) / 2`.
    EvalCenterCrop,
}

/// Fits a record to `target` samples per lead: right zero-padding when short, cropping when long.
/// Returns lead-major `leads x target` values. Only [`CropMode::TrainRandomCrop`] on a long
/// record draws from `rng`.
pub fn condition_length<R: Rng + ?Sized>(record: &EcgRecord, target: usize, mode: CropMode, rng: &mut R) -> Vec<f64> {
    let len = record.len();
    let offset = if len > target {
        match mode {
            CropMode::TrainRandomCrop => rng.random_range(0..=len - target),
            CropMode::EvalCenterCrop => (len - target) / 2,
        }
    } else {
        0
    };
    let take = target.min(len);
    let mut out = vec![0.0; record.lead_count() * target];
    for (lead, dst) in out.chunks_exact_mut(target).enumerate() {
        let src = &record.lead(lead)[offset..offset + take];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = f64::from(s);
        }
    }
    out
}

/// Stacks conditioned records into a `[B, leads, target]` tensor.
pub fn make_batch<R: Rng + ?Sized>(records: &[&EcgRecord], target: usize, mode: CropMode, rng: &mut R) -> Tensor {
    let leads = records.first().map_or(0, |r| r.lead_count());
    let mut values = Vec::with_capacity(records.len() * leads * target);
    for r in records {
        values.extend(condition_length(r, target, mode, rng));
    }
    Tensor::new(vec![records.len(), leads, target], values).expect("non-empty batch of equal-lead records")
}
