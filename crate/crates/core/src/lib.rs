//! Subword-informed caption modeling.
//!
//! * [`corpus`]: caption ingestion and normalization.
//! * [`unigram`]: unigram language-model subword tokenizer (EM training,
//!   Viterbi segmentation, deterministic detokenization).
//! * [`baseline`]: word-level and BPE tokenizers.
//! * [`analysis`]: vocabulary-size sweeps, caption uniqueness, parameter counts.
//! * [`lm`]: object-relational transformer caption model.

pub mod analysis;
pub mod baseline;
pub mod corpus;
pub mod error;
pub mod lm;
pub mod unigram;

pub use corpus::{load_corpus, Caption, Corpus, CorpusStats};
pub use error::{Error, Result};
pub use lm::{ModelConfig, ModelParams, Region, RegionSet};
pub use unigram::{SubwordVocab, TokenSequence, TrainerConfig};
