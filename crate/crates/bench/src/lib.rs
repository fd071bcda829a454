//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use subcap_core::corpus::{normalize, DEFAULT_MAX_WORDS};
use subcap_core::lm::{
    frame_tokens, model_vocab_size, synthetic_regions, to_model_ids, Example, SyntheticConfig,
};
use subcap_core::unigram::{encode, train_unigram};
use subcap_core::{load_corpus, Corpus, ModelConfig, ModelParams, SubwordVocab, TrainerConfig};

pub fn desk_corpus() -> Corpus {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/desk_corpus.tsv");
    load_corpus(path, DEFAULT_MAX_WORDS).expect("desk corpus")
}

pub fn desk_vocab(corpus: &Corpus, k: usize) -> SubwordVocab {
    train_unigram(corpus, &TrainerConfig::new(k)).expect("unigram training")
}

/// Ten synthetic scenes with a matching vocabulary and a freshly initialised model.
pub fn lm_fixture() -> (Vec<Example>, ModelParams) {
    let scenes = synthetic_regions(0, 10, &SyntheticConfig::default()).expect("scenes");
    let lines: Vec<(String, String)> = scenes
        .iter()
        .map(|s| (s.image_id.clone(), s.caption.clone()))
        .collect();
    let corpus = Corpus::from_raw(lines, DEFAULT_MAX_WORDS);
    let vocab = train_unigram(
        &corpus,
        &TrainerConfig {
            min_piece_count: 1,
            ..TrainerConfig::new(80)
        },
    )
    .expect("vocab");
    let mut cfg = ModelConfig::desk(model_vocab_size(vocab.len()));
    cfg.d_in = scenes[0].regions.appearance_dim();
    let params = ModelParams::init(&cfg, 0).expect("params");
    let batch = scenes
        .iter()
        .map(|s| Example {
            regions: s.regions.clone(),
            tokens: frame_tokens(
                &to_model_ids(&encode(&normalize(&s.caption), &vocab).expect("encode").ids),
                0,
            ),
        })
        .collect();
    (batch, params)
}
