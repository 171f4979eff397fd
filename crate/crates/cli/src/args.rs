//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use catcast_core::neural::{Activation, Family, OptimizerKind};
use catcast_core::pipeline::EvalMode;

use crate::config::{EncodingName, ModelKind, RunConfig};
use crate::data::RowSet;

#[derive(Debug, Parser)]
#[command(
    name = "catcast",
    version,
    about = "Multi-stage prediction for purely categorical tables"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed (falls back to the config file, then CATCAST_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Rendering of results on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw register dump and store it with its year-based split.
    Ingest(IngestArgs),
    /// Generate a synthetic register from a generator spec.
    Synth(SynthArgs),
    /// Train stage models and save them as artifacts.
    Train(TrainArgs),
    /// Iterative grid search with k-fold cross-validation.
    Gridsearch(GridsearchArgs),
    /// Top-1/2/3 accuracy of saved models.
    Evaluate(EvaluateArgs),
    /// Top-3 categories per stage for one record.
    Predict(PredictArgs),
    /// Compare analytic and numerical gradients of reduced stage networks.
    Gradcheck(GradcheckArgs),
    /// Re-run the command recorded in a report and compare the results.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Default, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub min_year: Option<i32>,
    #[arg(long)]
    pub max_year: Option<i32>,
    #[arg(long)]
    pub test_year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw CSV dump.
    #[arg(long)]
    pub input: PathBuf,
    /// Two-column CSV of category renames (old, new).
    #[arg(long)]
    pub renames: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub rows: usize,
    /// Output CSV; a `.meta.json` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Stage selector: a single stage or all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StageSel {
    One(u8),
    All,
}

impl StageSel {
    pub fn stages(self) -> Vec<u8> {
        match self {
            StageSel::One(s) => vec![s],
            StageSel::All => vec![1, 2, 3],
        }
    }
}

impl std::fmt::Display for StageSel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageSel::One(s) => write!(f, "{s}"),
            StageSel::All => f.write_str("all"),
        }
    }
}

impl From<StageSel> for String {
    fn from(s: StageSel) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for StageSel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl std::str::FromStr for StageSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(StageSel::All),
            "1" | "2" | "3" => Ok(StageSel::One(s.parse().unwrap())),
            _ => Err(format!("stage must be 1, 2, 3 or all, got {s:?}")),
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    /// neural (stage default), mlp, conv1d, logreg, tree or forest.
    #[arg(long = "model")]
    pub kind: Option<ModelKind>,
    /// integer, binary, hashing, one-hot or embedding.
    #[arg(long)]
    pub encoding: Option<EncodingName>,
    #[arg(long)]
    pub hash_buckets: Option<usize>,
    /// Hidden layer widths, e.g. 512,256.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Embedding width per input variable, e.g. 6,16,9,50.
    #[arg(long, value_delimiter = ',')]
    pub embedding_dims: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct TrainingArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Ingest directory or cleaned CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// 1, 2, 3 or all.
    #[arg(long, default_value = "all")]
    pub stage: StageSel,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Directory receiving `stage<N>.model` artifacts.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridsearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub stage: u8,
    /// Cross-validation folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Configurations evaluated per iteration (seeded subsample).
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub encoding: Option<EncodingName>,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Trace file: one JSON record per line.
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "all")]
    pub stage: StageSel,
    #[arg(long, default_value = "teacher")]
    pub mode: EvalMode,
    /// Stage artifacts, any order.
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Rows scored.
    #[arg(long, value_enum, default_value_t = RowSet::Test)]
    pub rows: RowSet,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Stage artifacts; stage 1 is required and stages must be consecutive.
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// One-row CSV with a header.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Field value as NAME=VALUE; repeatable, overrides the record file.
    #[arg(long = "var", value_name = "NAME=VALUE")]
    pub fields: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "all")]
    pub stage: StageSel,
    /// Largest layer width of the reduced networks.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = Activation::Tanh)]
    pub activation: Activation,
    #[arg(long, default_value_t = catcast_core::neural::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Report or trace written by an earlier run.
    pub report: PathBuf,
}

impl SplitArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.min_year {
            c.split.min_year = v;
        }
        if let Some(v) = self.max_year {
            c.split.max_year = v;
        }
        if let Some(v) = self.test_year {
            c.split.test_year = v;
        }
    }
}

impl ModelArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        let m = &mut c.model;
        if let Some(v) = self.kind {
            m.kind = v;
        }
        if let Some(v) = self.encoding {
            m.encoding = Some(v);
        }
        if let Some(v) = self.hash_buckets {
            m.hash_buckets = v;
        }
        if let Some(v) = &self.hidden {
            m.hidden = Some(v.clone());
        }
        if let Some(v) = &self.embedding_dims {
            m.embedding_dims = Some(v.clone());
        }
        if let Some(v) = self.activation {
            m.activation = Some(v);
        }
        if let Some(v) = self.dropout {
            m.dropout = Some(v);
        }
        if let Some(v) = self.n_trees {
            m.n_trees = v;
        }
        if let Some(v) = self.max_depth {
            m.max_depth = Some(v);
        }
    }
}

impl TrainingArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        let t = &mut c.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = Some(v);
        }
        if let Some(v) = self.optimizer {
            t.optimizer = v;
        }
    }
}
