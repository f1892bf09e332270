use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ecg_unc_core::rejection::{ThresholdGrid, UncertaintyKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "ecg-unc",
    version,
    about = "Synthetic ECG classification with MC-dropout uncertainty and rejection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic 12-lead dataset.
    GenData(GenDataArgs),
    /// Train a classifier on the training split and keep the best validation checkpoint.
    Train(TrainArgs),
    /// Monte Carlo dropout inference on the test split.
    Evaluate(EvaluateArgs),
    /// Threshold sweep over an evaluation's per-record uncertainties.
    Sweep(SweepArgs),
    /// Re-run a command from its manifest and compare output hashes.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    /// JSON generator config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to 10 unless set by --config.
    #[arg(long)]
    pub records_per_class: Option<usize>,
    #[arg(long)]
    pub hard_fraction: Option<f64>,
    #[arg(long)]
    pub label_flip_fraction: Option<f64>,
    /// Shortest record in seconds.
    #[arg(long)]
    pub min_duration: Option<f64>,
    /// Longest record in seconds.
    #[arg(long)]
    pub max_duration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetScale {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = NetScale::Desk)]
    pub net_scale: NetScale,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the 80/10/10 record split; evaluate must use the same value.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub plateau_factor: Option<f64>,
    /// Optimizer steps without validation improvement before the rate is cut.
    #[arg(long)]
    pub patience_steps: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Fails if the checkpoint was built at a different scale.
    #[arg(long, value_enum)]
    pub net_scale: Option<NetScale>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub eval_dir: PathBuf,
    /// start:stop:step, endpoints inclusive.
    #[arg(long, default_value = "0.4:1.5:0.05", value_parser = parse_grid)]
    #[serde(with = "grid_string")]
    pub grid: ThresholdGrid,
    #[arg(long, default_value = "total", value_parser = parse_kind)]
    pub kind: UncertaintyKind,
    /// Threshold for the accepted/rejected confusion-matrix pair.
    #[arg(long, default_value_t = 0.4)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where the re-run writes; replaces the recorded output path.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_grid(s: &str) -> Result<ThresholdGrid, String> {
    s.parse()
        .map_err(|e: ecg_unc_core::rejection::RejectionError| e.to_string())
}

fn parse_kind(s: &str) -> Result<UncertaintyKind, String> {
    s.parse()
}

mod grid_string {
    use ecg_unc_core::rejection::ThresholdGrid;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(grid: &ThresholdGrid, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(grid)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ThresholdGrid, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}
