use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "subcap",
    version,
    about = "Subword tokenizers and a relational caption model"
)]
pub struct Cli {
    /// TOML file with default values for any flag (keys use underscores).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Unigram,
    Bpe,
    Word,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a unigram, BPE or word-level tokenizer on a caption corpus.
    TrainTokenizer(TrainTokenizerArgs),
    /// Tokenize caption lines into space-separated pieces.
    Encode(CodecArgs),
    /// Rebuild caption lines from space-separated pieces.
    Decode(CodecArgs),
    /// Train unigram vocabularies of several sizes and compare tokenization.
    Sweep(SweepArgs),
    /// Distinctness and novelty of generated captions.
    Report(ReportArgs),
    /// Parameter counts of the caption model for several vocabulary sizes.
    Params(ParamsArgs),
    /// Write a synthetic region/caption dataset.
    Synth(SynthArgs),
    /// Train the caption model on a synthetic dataset.
    TrainLm(TrainLmArgs),
    /// Caption every image of a synthetic dataset with a trained model.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct TrainTokenizerArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    /// Target vocabulary size (unigram, or BPE when --merges is absent).
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// BPE merge count.
    #[arg(long)]
    pub merges: Option<usize>,
    /// Word-level frequency threshold.
    #[arg(long)]
    pub min_freq: Option<u64>,
    /// Captions are truncated to this many words.
    #[arg(long)]
    pub max_words: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    /// Tokenizer artifact written by train-tokenizer.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Read from this file instead of stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Vocabulary size to train; repeat for a grid.
    #[arg(long = "vocab-size")]
    pub vocab_sizes: Vec<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
    /// JSON report path; the text table goes next to it with a .txt extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// One caption per line; with `id<TAB>caption` lines the caption is used.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub max_words: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Vocabulary size; repeat to compare.
    #[arg(long = "vocab")]
    pub vocabs: Vec<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Encoder and decoder depth.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Sidecar JSON written by synth; otherwise the dataset is regenerated
    /// from --seed and --images.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub regions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Output stem: writes <out>.tsv and <out>.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// Unigram vocabulary used to tokenize the captions.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Longest token sequence the model accepts.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Parameter initialization seed.
    #[arg(long)]
    pub init_seed: Option<u64>,
    /// Stop once teacher-forced next-token accuracy reaches this value.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    /// Also write `<out>.step<N>` every N steps (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long, conflicts_with = "greedy")]
    pub beam: Option<usize>,
    /// Arg-max decoding instead of beam search.
    #[arg(long)]
    pub greedy: bool,
    /// Maximum generated tokens, including `<eos>`.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
