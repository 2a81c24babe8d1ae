use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "genreflow", version, about = "Multimodal movie-trailer genre classification")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest and record the seeded train/eval split.
    Ingest(IngestArgs),
    /// Extract and fuse per-trailer corpora.
    BuildCorpus(BuildCorpusArgs),
    /// Fit features and train a model on a corpus file.
    Train(TrainArgs),
    /// Score a checkpoint (or a scores file) and write metric reports.
    Evaluate(EvaluateArgs),
    /// Predict genre probabilities for new trailers.
    Predict(PredictArgs),
    /// Write precision-recall curves from a scores file.
    ExportPr(ExportPrArgs),
}

/// Applied as `--key value` defaults beneath explicit flags.
#[derive(Debug, Args)]
pub struct ConfigArg {
    /// key=value file; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.15)]
    pub eval_fraction: f64,
    /// Keep label-vector proportions in both halves.
    #[arg(long)]
    pub stratify: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args, Clone)]
pub struct PipelineArgs {
    /// Executable answering speech requests.
    #[arg(long)]
    pub speech_plugin: Option<PathBuf>,
    /// Executable answering situation requests.
    #[arg(long)]
    pub situation_plugin: Option<PathBuf>,
    /// Enabled modalities, e.g. `S,D,M` or `D,M`.
    #[arg(long, default_value = "S,D,M")]
    pub modalities: String,
    /// Fusion order of the three segments.
    #[arg(long, default_value = "D,S,M")]
    pub order: String,
    /// Worker threads for per-trailer extraction.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Base for relative media paths; defaults to the manifest directory.
    #[arg(long)]
    pub media_root: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub frame_stride: usize,
    #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
    pub silence_db: f64,
    #[arg(long, default_value_t = 300)]
    pub min_silence_ms: u64,
    #[arg(long, default_value_t = 200)]
    pub min_chunk_ms: u64,
    /// Append verb glosses to situation sentences when available.
    #[arg(long)]
    pub verb_definitions: bool,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Leave failed trailers out instead of exiting non-zero.
    #[arg(long)]
    pub skip_failures: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ecnet,
    Tfanet,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Ecnet)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.15)]
    pub eval_fraction: f64,
    /// Minimum document frequency for vocabulary tokens and n-grams.
    #[arg(long, default_value_t = 2)]
    pub min_df: usize,
    /// TF-IDF feature cap.
    #[arg(long, default_value_t = 40_000)]
    pub max_features: usize,
    /// Sequence length; defaults to the longest training sequence.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Eval,
    All,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary or TF-IDF file; defaults to the one beside the checkpoint.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Precomputed scores (id, label bits, five scores) instead of a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Which part of the corpus to score; `eval` re-derives the training split.
    #[arg(long, value_enum, default_value_t = Subset::Eval)]
    pub subset: Subset,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Column heading for the value column of the reports.
    #[arg(long, default_value = "value")]
    pub label: String,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Trailers to extract and score; genres may be empty.
    #[arg(long, conflicts_with = "corpus")]
    pub manifest: Option<PathBuf>,
    /// Already-built corpus file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct ExportPrArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
}
