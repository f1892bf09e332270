//! Residual bottleneck 1-D CNN with squeeze-and-excitation attention.
//!
//! Layout: a stem convolution maps the leads to the first stage width, then seven
//! stages of pre-activation bottleneck blocks follow. Each block runs
//! `[BN, Swish, Dropout] -> Conv1 -> [BN, Swish, Dropout] -> ConvK -> [BN, Swish, Dropout] -> Conv1 -> SE`
//! and adds a shortcut. The first block of a stage halves the length with a stride-2
//! ConvK while the shortcut max-pools by 2 (and projects with a 1x1 conv when the
//! width changes). A final BN/Swish, global average pooling, dropout and a dense
//! layer produce the logits.

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use config::{NetworkConfig, WidthScale, STAGE_COUNT};

use ecg_unc_autodiff::{
    AutodiffError, BatchNormMode, BatchStats, Conv1dSpec, DropoutMode, RunningStats, Tape, Tensor, Var,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config{}: {reason}", stage.map(|s| format!(" (stage {s})")).unwrap_or_default())]
    InvalidConfig { stage: Option<usize>, reason: String },
    #[error("input batch has shape {found:?}, expected [B, {leads}, {length}]")]
    InputShape {
        found: Vec<usize>,
        leads: usize,
        length: usize,
    },
    #[error("network produced non-finite output")]
    NonFinite,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// How stochastic layers behave during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelMode {
    /// Batch statistics and active dropout.
    Train,
    /// Running statistics, dropout off.
    EvalDeterministic,
    /// Running statistics, dropout on (Monte Carlo sampling).
    EvalMcDropout,
}

impl ModelMode {
    fn norm_mode(self) -> BatchNormMode {
        match self {
            ModelMode::Train => BatchNormMode::Train,
            _ => BatchNormMode::Eval,
        }
    }

    fn dropout_mode(self) -> DropoutMode {
        match self {
            ModelMode::EvalDeterministic => DropoutMode::Inactive,
            _ => DropoutMode::Active,
        }
    }
}

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    /// Whether weight decay applies (false for batch-norm affine terms).
    pub decay: bool,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBuffer {
    pub name: String,
    pub stats: RunningStats,
}

#[derive(Debug, Clone)]
struct ConvLayer {
    weight: usize,
    bias: usize,
    spec: Conv1dSpec,
}

#[derive(Debug, Clone)]
struct DenseLayer {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct NormLayer {
    gamma: usize,
    beta: usize,
    buffer: usize,
}

#[derive(Debug, Clone)]
struct SqueezeExcite {
    reduce: DenseLayer,
    expand: DenseLayer,
}

#[derive(Debug, Clone)]
struct Block {
    norm1: NormLayer,
    conv1: ConvLayer,
    norm2: NormLayer,
    conv_k: ConvLayer,
    norm3: NormLayer,
    conv2: ConvLayer,
    se: SqueezeExcite,
    downsample: bool,
    projection: Option<ConvLayer>,
}

/// Output of [`Network::forward_on_tape`].
pub struct ForwardOutput {
    pub logits: Var,
    /// Batch statistics per norm buffer; populated only in [`ModelMode::Train`].
    pub batch_stats: Vec<Option<BatchStats>>,
}

#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    params: Vec<Parameter>,
    buffers: Vec<NormBuffer>,
    stem: ConvLayer,
    blocks: Vec<Block>,
    head_norm: NormLayer,
    head: DenseLayer,
}

struct Builder<'a, R: Rng + ?Sized> {
    params: Vec<Parameter>,
    buffers: Vec<NormBuffer>,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn push(&mut self, name: String, value: Tensor, decay: bool) -> usize {
        self.params.push(Parameter { name, value, decay });
        self.params.len() - 1
    }

    fn kaiming(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| normal.sample(self.rng)).collect();
        Tensor::new(shape.to_vec(), values).expect("shape matches")
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, spec: Conv1dSpec) -> ConvLayer {
        let cin_g = cin / spec.groups;
        let w = self.kaiming(&[cout, cin_g, kernel], cin_g * kernel);
        let weight = self.push(format!("{name}.weight"), w, true);
        let bias = self.push(format!("{name}.bias"), Tensor::zeros(&[cout]), true);
        ConvLayer { weight, bias, spec }
    }

    fn dense(&mut self, name: &str, inputs: usize, outputs: usize, zero: bool) -> DenseLayer {
        let w = if zero {
            Tensor::zeros(&[outputs, inputs])
        } else {
            self.kaiming(&[outputs, inputs], inputs)
        };
        let weight = self.push(format!("{name}.weight"), w, true);
        let bias = self.push(format!("{name}.bias"), Tensor::zeros(&[outputs]), true);
        DenseLayer { weight, bias }
    }

    fn norm(&mut self, name: &str, channels: usize) -> NormLayer {
        let gamma = self.push(format!("{name}.gamma"), Tensor::filled(&[channels], 1.0), false);
        let beta = self.push(format!("{name}.beta"), Tensor::zeros(&[channels]), false);
        self.buffers.push(NormBuffer {
            name: name.to_string(),
            stats: RunningStats::new(channels),
        });
        NormLayer {
            gamma,
            beta,
            buffer: self.buffers.len() - 1,
        }
    }
}

impl Network {
    /// Builds and initializes a network. Convolutions and hidden dense layers use
    /// fan-in Kaiming normal weights, biases start at zero, BN at identity and the
    /// prediction layer at zero so a fresh network outputs uniform probabilities.
    pub fn build<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self, NetError> {
        config.validate()?;
        let widths = config.scaled_channels()?;
        let k = config.kernel_size;
        let mut b = Builder {
            params: Vec::new(),
            buffers: Vec::new(),
            rng,
        };
        let stem = b.conv("stem", config.input_leads, widths[0], k, Conv1dSpec::same(k, 1, 1));
        let mut blocks = Vec::new();
        let mut cin = widths[0];
        for (stage, (&width, &count)) in widths.iter().zip(&config.blocks_per_stage).enumerate() {
            for index in 0..count {
                let name = format!("stage{}.block{}", stage + 1, index + 1);
                let first = index == 0;
                let mid = config.bottleneck_width(width);
                let stride = if first { 2 } else { 1 };
                let se_hidden = config.se_width(width);
                let projection = (cin != width)
                    .then(|| b.conv(&format!("{name}.shortcut"), cin, width, 1, Conv1dSpec::same(1, 1, 1)));
                blocks.push(Block {
                    norm1: b.norm(&format!("{name}.bn1"), cin),
                    conv1: b.conv(&format!("{name}.conv1"), cin, mid, 1, Conv1dSpec::same(1, 1, 1)),
                    norm2: b.norm(&format!("{name}.bn2"), mid),
                    conv_k: b.conv(
                        &format!("{name}.conv_k"),
                        mid,
                        mid,
                        k,
                        Conv1dSpec::same(k, stride, config.groups),
                    ),
                    norm3: b.norm(&format!("{name}.bn3"), mid),
                    conv2: b.conv(&format!("{name}.conv2"), mid, width, 1, Conv1dSpec::same(1, 1, 1)),
                    se: SqueezeExcite {
                        reduce: b.dense(&format!("{name}.se.reduce"), width, se_hidden, false),
                        expand: b.dense(&format!("{name}.se.expand"), se_hidden, width, false),
                    },
                    downsample: first,
                    projection,
                });
                cin = width;
            }
        }
        let head_norm = b.norm("head.bn", cin);
        let head = b.dense("head.dense", cin, config.num_classes, true);
        Ok(Network {
            config,
            params: b.params,
            buffers: b.buffers,
            stem,
            blocks,
            head_norm,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[NormBuffer] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [NormBuffer] {
        &mut self.buffers
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Stem + three per block + projection shortcuts.
    pub fn conv_layer_count(&self) -> usize {
        1 + self.blocks.len() * 3 + self.blocks.iter().filter(|b| b.projection.is_some()).count()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Names of the weights of each block's final 1x1 conv, its bias, and of the block's
    /// other residual-branch parameters, in block order.
    pub fn residual_branch_names(&self) -> Vec<(String, String, Vec<String>)> {
        self.blocks
            .iter()
            .map(|b| {
                let name = |i: usize| self.params[i].name.clone();
                let others = [
                    b.norm1.gamma,
                    b.conv1.weight,
                    b.norm2.beta,
                    b.conv_k.weight,
                    b.norm3.gamma,
                    b.se.reduce.weight,
                ]
                .into_iter()
                .map(name)
                .collect();
                (name(b.conv2.weight), name(b.conv2.bias), others)
            })
            .collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Puts every parameter on the tape, in [`Network::parameters`] order.
    pub fn register_params(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<(), NetError> {
        let ok = shape.len() == 3 && shape[1] == self.config.input_leads && shape[2] == self.config.input_length;
        if ok {
            Ok(())
        } else {
            Err(NetError::InputShape {
                found: shape.to_vec(),
                leads: self.config.input_leads,
                length: self.config.input_length,
            })
        }
    }

    /// Records the full forward pass on `tape` using `params` (from [`Network::register_params`]).
    pub fn forward_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: Var,
        mode: ModelMode,
        rng: &mut R,
    ) -> Result<ForwardOutput, NetError> {
        self.forward_impl(tape, params, input, mode, rng, false)
    }

    fn forward_impl<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: Var,
        mode: ModelMode,
        rng: &mut R,
        bypass_se: bool,
    ) -> Result<ForwardOutput, NetError> {
        self.check_input(tape.shape(input))?;
        let mut pass = Pass {
            net: self,
            tape,
            params,
            mode,
            rng,
            stats: vec![None; self.buffers.len()],
        };
        let mut x = pass.conv(&self.stem, input)?;
        for block in &self.blocks {
            x = pass.block(block, x, bypass_se)?;
        }
        let h = pass.norm_act(&self.head_norm, x)?;
        let h = pass.tape.global_avg_pool(h)?;
        let h = pass.dropout(h)?;
        let logits = pass.dense(&self.head, h)?;
        Ok(ForwardOutput {
            logits,
            batch_stats: pass.stats,
        })
    }

    /// Logits for a `[B, leads, length]` batch. Running statistics are not updated.
    pub fn forward<R: Rng + ?Sized>(&self, batch: &Tensor, mode: ModelMode, rng: &mut R) -> Result<Tensor, NetError> {
        self.check_input(batch.shape())?;
        let mut tape = Tape::new();
        let params = self.register_params(&mut tape, false);
        let input = tape.constant(batch.clone());
        let out = self.forward_on_tape(&mut tape, &params, input, mode, rng)?;
        let logits = tape.value(out.logits).clone();
        if !logits.all_finite() {
            return Err(NetError::NonFinite);
        }
        Ok(logits)
    }

    /// Class probabilities (softmax of [`Network::forward`]).
    pub fn predict_proba<R: Rng + ?Sized>(
        &self,
        batch: &Tensor,
        mode: ModelMode,
        rng: &mut R,
    ) -> Result<Tensor, NetError> {
        let logits = self.forward(batch, mode, rng)?;
        let k = self.config.num_classes;
        let probs = ecg_unc_autodiff::softmax_rows(logits.values(), k);
        Ok(Tensor::new(logits.shape().to_vec(), probs)?)
    }

    /// Folds training-batch statistics into the running statistics.
    pub fn apply_batch_stats(&mut self, stats: &[Option<BatchStats>]) {
        let momentum = self.config.bn_momentum;
        for (buffer, s) in self.buffers.iter_mut().zip(stats) {
            if let Some(s) = s {
                buffer.stats.update(s, momentum);
            }
        }
    }

    #[cfg(test)]
    fn forward_bypassing_se(&self, batch: &Tensor, mode: ModelMode) -> Result<Tensor, NetError> {
        let mut tape = Tape::new();
        let params = self.register_params(&mut tape, false);
        let input = tape.constant(batch.clone());
        let mut rng = crate::seed::rng_from_seed(0);
        let out = self.forward_impl(&mut tape, &params, input, mode, &mut rng, true)?;
        Ok(tape.value(out.logits).clone())
    }
}

struct Pass<'a, R: Rng + ?Sized> {
    net: &'a Network,
    tape: &'a mut Tape,
    params: &'a [Var],
    mode: ModelMode,
    rng: &'a mut R,
    stats: Vec<Option<BatchStats>>,
}

impl<R: Rng + ?Sized> Pass<'_, R> {
    fn conv(&mut self, layer: &ConvLayer, x: Var) -> Result<Var, NetError> {
        let (w, b) = (self.params[layer.weight], self.params[layer.bias]);
        Ok(self.tape.conv1d(x, w, Some(b), layer.spec)?)
    }

    fn dense(&mut self, layer: &DenseLayer, x: Var) -> Result<Var, NetError> {
        let (w, b) = (self.params[layer.weight], self.params[layer.bias]);
        Ok(self.tape.dense(x, w, Some(b))?)
    }

    fn dropout(&mut self, x: Var) -> Result<Var, NetError> {
        let p = self.net.config.dropout_p;
        Ok(self.tape.dropout(x, p, self.mode.dropout_mode(), self.rng)?)
    }

    fn norm_act(&mut self, layer: &NormLayer, x: Var) -> Result<Var, NetError> {
        let out = self.tape.batchnorm1d(
            x,
            self.params[layer.gamma],
            self.params[layer.beta],
            &self.net.buffers[layer.buffer].stats,
            self.mode.norm_mode(),
            self.net.config.bn_epsilon,
        )?;
        self.stats[layer.buffer] = out.batch_stats;
        Ok(self.tape.swish(out.output))
    }

    /// BN -> Swish -> Dropout.
    fn pre_activation(&mut self, layer: &NormLayer, x: Var) -> Result<Var, NetError> {
        let h = self.norm_act(layer, x)?;
        self.dropout(h)
    }

    fn block(&mut self, block: &Block, x: Var, bypass_se: bool) -> Result<Var, NetError> {
        let h = self.pre_activation(&block.norm1, x)?;
        let h = self.conv(&block.conv1, h)?;
        let h = self.pre_activation(&block.norm2, h)?;
        let h = self.conv(&block.conv_k, h)?;
        let h = self.pre_activation(&block.norm3, h)?;
        let mut h = self.conv(&block.conv2, h)?;
        if !bypass_se {
            let s = self.tape.global_avg_pool(h)?;
            let s = self.dense(&block.se.reduce, s)?;
            let s = self.tape.swish(s);
            let s = self.dense(&block.se.expand, s)?;
            let s = self.tape.sigmoid(s);
            h = self.tape.scale_channels(h, s)?;
        }
        let mut shortcut = x;
        if block.downsample {
            shortcut = self.tape.maxpool1d(shortcut, 2, 2)?;
        }
        if let Some(proj) = &block.projection {
            shortcut = self.conv(proj, shortcut)?;
        }
        Ok(self.tape.add(h, shortcut)?)
    }
}
