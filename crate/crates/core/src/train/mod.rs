//! Supervised training: dataset splits, Adam with decoupled weight decay, reduce-on-plateau
//! scheduling and best-checkpoint selection on validation Macro-F1.

mod optim;

pub use optim::{AdamConfig, AdamState, PlateauScheduler};

use std::io::Write;

use ecg_unc_autodiff::{AutodiffError, Tape};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_batch, CropMode, Dataset};
use crate::metrics::macro_f1;
use crate::net::{ModelMode, NetError, Network};
use crate::seed::{rng_for, stream, PipelineRng};
use crate::uncertainty::argmax;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("need at least {min} records to split, got {found}")]
    TooFewRecords { found: usize, min: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("parameter {name}: gradient length {found} does not match {expected}")]
    GradientShape {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("record {id} has {found} leads, network expects {expected}")]
    LeadMismatch { id: String, expected: usize, found: usize },
    #[error("label {label} of record {id} exceeds the network's {classes} classes")]
    LabelOutOfRange { id: String, label: usize, classes: usize },
    #[error(transparent)]
    Network(#[from] NetError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("history output: {0}")]
    Csv(#[from] csv::Error),
}

/// Train/validation/test fractions of a record-level split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            validation: 0.1,
            test: 0.1,
        }
    }
}

/// Record indices of each partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub const MIN_SPLIT_RECORDS: usize = 10;

/// Shuffles record indices and cuts them into partitions. Validation and test sizes are
/// `floor(fraction * n)`; the remainder goes to training.
pub fn split_dataset(records: usize, spec: SplitSpec, seed: u64) -> Result<Split, TrainError> {
    if records < MIN_SPLIT_RECORDS {
        return Err(TrainError::TooFewRecords {
            found: records,
            min: MIN_SPLIT_RECORDS,
        });
    }
    let valid = |f: f64| (0.0..1.0).contains(&f);
    if !valid(spec.validation) || !valid(spec.test) || spec.validation + spec.test >= 1.0 {
        return Err(TrainError::InvalidConfig(format!(
            "split fractions {} / {} leave no training data",
            spec.validation, spec.test
        )));
    }
    let mut order: Vec<usize> = (0..records).collect();
    order.shuffle(&mut rng_for(seed, stream::SPLIT));
    let n_val = (spec.validation * records as f64).floor() as usize;
    let n_test = (spec.test * records as f64).floor() as usize;
    let n_train = records - n_val - n_test;
    Ok(Split {
        train: order[..n_train].to_vec(),
        validation: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_init: f64,
    pub plateau_factor: f64,
    pub plateau_patience_steps: usize,
    pub weight_decay: f64,
    pub max_steps: usize,
    /// Validation cadence in optimizer steps.
    pub eval_every: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Full-scale schedule: batch 256, patience 6000 steps.
    pub fn paper() -> Self {
        TrainConfig {
            batch_size: 256,
            lr_init: 1e-3,
            plateau_patience_steps: 6000,
            max_steps: 60_000,
            ..Self::desk()
        }
    }

    /// Single-CPU schedule: small batches and a higher initial rate so the
    /// network becomes confident on clean records within 1600 steps.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 16,
            lr_init: 3e-3,
            plateau_factor: 0.3,
            plateau_patience_steps: 300,
            weight_decay: 1e-4,
            max_steps: 1600,
            eval_every: 50,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail("plateau_factor must lie in (0, 1)");
        }
        if !(self.lr_init >= 0.0) || !(self.weight_decay >= 0.0) {
            return fail("lr_init and weight_decay must be non-negative");
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1");
        }
        self.adam.validate().map_err(TrainError::InvalidConfig)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
}

impl TrainHistory {
    pub fn best_val_macro_f1(&self) -> Option<f64> {
        self.steps.iter().filter_map(|s| s.val_macro_f1).reduce(f64::max)
    }

    /// `step,loss,lr,val_macro_f1` with an empty last field between evaluations.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "loss", "lr", "val_macro_f1"])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.loss.to_string(),
                s.lr.to_string(),
                s.val_macro_f1.map(|f| f.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub struct TrainOutcome {
    /// Weights from the evaluation with the highest validation Macro-F1.
    pub network: Network,
    pub history: TrainHistory,
    pub best_step: usize,
    pub best_val_macro_f1: f64,
}

fn check_dataset(net: &Network, data: &Dataset) -> Result<(), TrainError> {
    let cfg = net.config();
    for r in &data.records {
        if r.lead_count() != cfg.input_leads {
            return Err(TrainError::LeadMismatch {
                id: r.id.clone(),
                expected: cfg.input_leads,
                found: r.lead_count(),
            });
        }
        if r.label as usize >= cfg.num_classes {
            return Err(TrainError::LabelOutOfRange {
                id: r.id.clone(),
                label: r.label as usize,
                classes: cfg.num_classes,
            });
        }
    }
    Ok(())
}

/// Deterministic predictions (running BN statistics, no dropout, centre crops).
pub fn predict_classes(net: &Network, data: &Dataset, batch_size: usize) -> Result<Vec<usize>, TrainError> {
    let cfg = net.config();
    let mut unused = rng_for(0, stream::CROP);
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.records.chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let x = make_batch(&refs, cfg.input_length, CropMode::EvalCenterCrop, &mut unused);
        let probs = net.predict_proba(&x, ModelMode::EvalDeterministic, &mut unused)?;
        out.extend(probs.values().chunks_exact(cfg.num_classes).map(argmax));
    }
    Ok(out)
}

pub fn validation_macro_f1(net: &Network, data: &Dataset, batch_size: usize) -> Result<f64, TrainError> {
    let predicted = predict_classes(net, data, batch_size)?;
    Ok(macro_f1(&data.labels(), &predicted, net.config().num_classes).expect("labels checked against class count"))
}

/// Endless stream of shuffled epochs.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: PipelineRng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, stream::SHUFFLE);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchSampler { order, cursor: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

/// Trains with cross-entropy and returns the best validation checkpoint.
pub fn train(
    mut net: Network,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    check_dataset(&net, train_set)?;
    check_dataset(&net, val_set)?;
    let input_length = net.config().input_length;
    let eval_batch = config.batch_size.max(64);

    let mut sampler = BatchSampler::new(train_set.len(), config.seed);
    let mut crop_rng = rng_for(config.seed, stream::CROP);
    let mut dropout_rng = rng_for(config.seed, stream::DROPOUT);
    let mut adam = AdamState::new(net.parameters());
    let mut scheduler = PlateauScheduler::new(config.lr_init, config.plateau_factor, config.plateau_patience_steps);
    let mut history = TrainHistory::default();
    let mut best: Option<(Network, usize, f64)> = None;

    for step in 1..=config.max_steps {
        let indices = sampler.next_batch(config.batch_size);
        let records: Vec<_> = indices.iter().map(|&i| &train_set.records[i]).collect();
        let labels: Vec<usize> = records.iter().map(|r| r.label as usize).collect();
        let x = make_batch(&records, input_length, CropMode::TrainRandomCrop, &mut crop_rng);

        let mut tape = Tape::new();
        let params = net.register_params(&mut tape, true);
        let input = tape.constant(x);
        let out = net.forward_on_tape(&mut tape, &params, input, ModelMode::Train, &mut dropout_rng)?;
        let loss_var = tape.cross_entropy(out.logits, &labels)?;
        let loss = tape.values(loss_var)[0];
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { step });
        }
        tape.backward(loss_var)?;
        let grads: Vec<Vec<f64>> = params
            .iter()
            .zip(net.parameters())
            .map(|(&v, p)| tape.grad(v).map_or_else(|| vec![0.0; p.value.numel()], <[f64]>::to_vec))
            .collect();
        drop(tape);
        let lr = scheduler.lr();
        adam.step(net.parameters_mut(), &grads, lr, config.weight_decay, &config.adam)?;
        net.apply_batch_stats(&out.batch_stats);

        let val_macro_f1 = if step % config.eval_every == 0 || step == config.max_steps {
            let f1 = validation_macro_f1(&net, val_set, eval_batch)?;
            scheduler.observe(step, f1);
            if best.as_ref().is_none_or(|(_, _, b)| f1 > *b) {
                best = Some((net.clone(), step, f1));
            }
            Some(f1)
        } else {
            None
        };
        history.steps.push(StepRecord {
            step,
            loss,
            lr,
            val_macro_f1,
        });
    }

    let (network, best_step, best_val_macro_f1) = match best {
        Some(b) => b,
        None => {
            let f1 = validation_macro_f1(&net, val_set, eval_batch)?;
            (net, 0, f1)
        }
    };
    Ok(TrainOutcome {
        network,
        history,
        best_step,
        best_val_macro_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fractions() {
        let s = split_dataset(100, SplitSpec::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (80, 10, 10));
        let s = split_dataset(101, SplitSpec::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (81, 10, 10));
    }

    #[test]
    fn partition_is_exhaustive_and_seeded() {
        let a = split_dataset(57, SplitSpec::default(), 4).unwrap();
        assert_eq!(a, split_dataset(57, SplitSpec::default(), 4).unwrap());
        assert_ne!(a, split_dataset(57, SplitSpec::default(), 5).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(
            split_dataset(9, SplitSpec::default(), 0),
            Err(TrainError::TooFewRecords { found: 9, min: 10 })
        ));
    }

    #[test]
    fn config_validation() {
        TrainConfig::desk().validate().unwrap();
        TrainConfig::paper().validate().unwrap();
        for bad in [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::desk()
            },
            TrainConfig {
                plateau_factor: 1.0,
                ..TrainConfig::desk()
            },
            TrainConfig {
                plateau_factor: 0.0,
                ..TrainConfig::desk()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(7, 3);
        let mut seen = s.next_batch(7);
        seen.sort_unstable();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
        assert_eq!(s.next_batch(10).len(), 10);
    }
}
