use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "divrank", version, about = "Learn and evaluate diversified rankings")]
pub struct Cli {
    /// Worker threads for per-query parallel work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Config file with default flag values. Defaults to ./divrank.toml
    /// when present; DIVRANK_CONFIG overrides that default location.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset split into train/validation/test files.
    Synth(SynthArgs),
    /// Compute pairwise diversity channels from raw document fields.
    FeatureExtract(FeatureArgs),
    /// Write greedy target rankings and their ideal scores.
    BuildTargets(TargetArgs),
    /// Train a model with the cutting-plane algorithm.
    Train(TrainArgs),
    /// Rank every query with a trained model.
    Predict(PredictArgs),
    /// Score a run file against a dataset's judgments.
    Evaluate(EvaluateArgs),
    /// Relevance-only or MMR runs.
    Baseline(BaselineArgs),
    /// Train over a grid of C values and pick one on validation data.
    SweepC(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    ErrIa,
    AlphaNdcg,
    Nrbp,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MeasureFlags {
    /// Measure to optimize or report on.
    #[arg(long, value_enum)]
    pub measure: Option<MeasureArg>,
    /// Subtopic redundancy penalty.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// NRBP patience.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Rank cutoff K.
    #[arg(long)]
    pub cutoff: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// Regularization trade-off C.
    #[arg(long)]
    pub c: Option<f64>,
    /// Constraint violation tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Cap on cutting-plane iterations.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives train.jsonl, validation.jsonl, test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub subtopics: Option<usize>,
    /// Noise on informative values (sigma).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Strength of the subtopic signal in pairwise channels.
    #[arg(long)]
    pub signal: Option<f64>,
    #[arg(long)]
    pub redundancy: Option<f64>,
    /// Also emit terms, categories, urls and links for feature-extract.
    #[arg(long)]
    pub raw_fields: bool,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of pLSA topics.
    #[arg(long)]
    pub topics: Option<usize>,
    /// Values kept per document and channel.
    #[arg(long)]
    pub top_t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated channel list (default: all seven).
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    /// Fit the topic model per query rather than per collection.
    #[arg(long)]
    pub plsa_per_query: bool,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Run file with the target rankings.
    #[arg(long)]
    pub out: PathBuf,
    /// Table of ideal raw scores per query.
    #[arg(long)]
    pub ideal_out: Option<PathBuf>,
    #[command(flatten)]
    pub measure: MeasureFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log, one JSON record per iteration.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub measure: MeasureFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ranking length (default: the model's cutoff).
    #[arg(long)]
    pub cutoff: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    /// Report table (tab-separated).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Diversity qrels replacing the dataset's judgments.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[command(flatten)]
    pub measure: MeasureFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Relevance,
    Mmr,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset for tuning lambda (MMR only).
    #[arg(long)]
    pub tune_on: Option<PathBuf>,
    /// Comma-separated lambda values to tune over.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Fixed lambda, skipping tuning.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Channel whose dissimilarity MMR uses (default: text, else the second
    /// channel).
    #[arg(long)]
    pub channel: Option<String>,
    /// Tuning table (tab-separated).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub measure: MeasureFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    /// Report table (tab-separated).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the model for the selected C.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Comma-separated C values (default 1e-4,...,1e3).
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub measure: MeasureFlags,
    #[command(flatten)]
    pub train_flags: TrainFlags,
}
