//! Monte Carlo evaluation of a trained network over a dataset.

use crate::data::{make_batch, CropMode, Dataset};
use crate::net::Network;
use crate::rejection::ScoredRecord;
use crate::seed::{rng_for, stream};
use crate::uncertainty::{decompose, mc_sample, UncertaintyError, UncertaintyEstimate};

/// Records are evaluated in fixed-size chunks so that outputs do not depend on thread count.
pub const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordResult {
    pub id: String,
    pub true_label: usize,
    pub predicted: usize,
    pub estimate: UncertaintyEstimate,
}

impl RecordResult {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted
    }

    pub fn scored(&self) -> ScoredRecord {
        ScoredRecord {
            true_label: self.true_label,
            predicted: self.predicted,
            estimate: self.estimate,
        }
    }
}

/// Runs `passes` dropout-active forward passes over every record (centre-cropped) and
/// decomposes the predictive entropy. Chunk `c` uses MC seeds derived from `(seed, c)`.
pub fn evaluate_mc(
    net: &Network,
    data: &Dataset,
    passes: usize,
    seed: u64,
) -> Result<Vec<RecordResult>, UncertaintyError> {
    let cfg = net.config();
    let mut unused = rng_for(seed, stream::CROP);
    let mut results = Vec::with_capacity(data.len());
    for (chunk_index, chunk) in data.records.chunks(EVAL_BATCH).enumerate() {
        let refs: Vec<_> = chunk.iter().collect();
        let x = make_batch(&refs, cfg.input_length, CropMode::EvalCenterCrop, &mut unused);
        let base = crate::seed::derive_seed(seed, stream::MC).wrapping_add((chunk_index as u64) << 32);
        for (record, mc) in chunk.iter().zip(mc_sample(net, &x, passes, base)?) {
            results.push(RecordResult {
                id: record.id.clone(),
                true_label: record.label as usize,
                predicted: mc.predicted_class(),
                estimate: decompose(&mc)?,
            });
        }
    }
    Ok(results)
}
