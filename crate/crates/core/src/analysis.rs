//! Vocabulary-size tradeoffs, caption uniqueness and parameter counts.
//!
//! JSON reports use the field names of the structs below verbatim.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lm::ModelConfig;
use crate::unigram::{train_unigram, viterbi_segment, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub requested_vocab_size: usize,
    pub actual_vocab_size: usize,
    pub mean_tokens_per_caption: f64,
    pub max_tokens_per_caption: usize,
    pub oov_rate: f64,
    pub distinct_pieces_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub num_generated: usize,
    pub pct_distinct_within_set: f64,
    pub pct_novel_vs_training: f64,
    pub avg_length_words: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub embedding_params: usize,
    pub output_params: usize,
    pub core_params: usize,
    pub total: usize,
}

/// Word-level tokenization statistics of one vocabulary over a corpus.
pub(crate) fn measure(
    corpus: &Corpus,
    vocab: &crate::unigram::SubwordVocab,
    requested: usize,
) -> SweepRow {
    let mut total_tokens = 0usize;
    let mut max_tokens = 0usize;
    let (mut words, mut oov_words) = (0usize, 0usize);
    let mut used = BTreeSet::new();
    for text in corpus.texts() {
        let mut n = 0;
        for word in text.split(' ').filter(|w| !w.is_empty()) {
            words += 1;
            match viterbi_segment(word, vocab) {
                Ok(seq) => {
                    n += seq.len();
                    used.extend(seq.ids);
                }
                Err(_) => oov_words += 1,
            }
        }
        total_tokens += n;
        max_tokens = max_tokens.max(n);
    }
    let captions = corpus.len().max(1);
    SweepRow {
        requested_vocab_size: requested,
        actual_vocab_size: vocab.len(),
        mean_tokens_per_caption: total_tokens as f64 / captions as f64,
        max_tokens_per_caption: max_tokens,
        oov_rate: if words == 0 {
            0.0
        } else {
            oov_words as f64 / words as f64
        },
        distinct_pieces_used: used.len(),
    }
}

/// Trains one unigram vocabulary per requested size and measures how the
/// corpus tokenizes under it. `cfg` supplies everything except the target
/// size, and the seed size is rescaled to 20 × k. Rows come out sorted by k.
pub fn vocab_sweep(corpus: &Corpus, ks: &[usize], cfg: &TrainerConfig) -> Result<SweepReport> {
    if ks.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let rows = ks
        .into_iter()
        .map(|k| {
            let cfg = TrainerConfig {
                target_vocab_size: k,
                seed_size: 20 * k,
                ..cfg.clone()
            };
            let vocab = train_unigram(corpus, &cfg)?;
            Ok(measure(corpus, &vocab, k))
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { rows })
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>10} {:>10} {:>12} {:>10} {:>8} {:>10}",
            "requested", "actual", "mean_tokens", "max_tokens", "oov", "used"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>10} {:>10} {:>12.4} {:>10} {:>8.4} {:>10}",
                r.requested_vocab_size,
                r.actual_vocab_size,
                r.mean_tokens_per_caption,
                r.max_tokens_per_caption,
                r.oov_rate,
                r.distinct_pieces_used
            );
        }
        out
    }
}

/// Distinctness within the generated set, novelty against the training
/// captions and mean length in words. An empty set reports zeros.
pub fn uniqueness_report<S: AsRef<str>>(generated: &[S], training: &Corpus) -> UniquenessReport {
    let n = generated.len();
    if n == 0 {
        return UniquenessReport {
            num_generated: 0,
            pct_distinct_within_set: 0.0,
            pct_novel_vs_training: 0.0,
            avg_length_words: 0.0,
        };
    }
    let train: BTreeSet<&str> = training.texts().collect();
    let distinct: BTreeSet<&str> = generated.iter().map(AsRef::as_ref).collect();
    let novel = generated
        .iter()
        .filter(|g| !train.contains(g.as_ref()))
        .count();
    let words: usize = generated
        .iter()
        .map(|g| g.as_ref().split_whitespace().count())
        .sum();
    UniquenessReport {
        num_generated: n,
        pct_distinct_within_set: 100.0 * distinct.len() as f64 / n as f64,
        pct_novel_vs_training: 100.0 * novel as f64 / n as f64,
        avg_length_words: words as f64 / n as f64,
    }
}

impl UniquenessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        format!(
            "{:<26} {:>10}\n{:<26} {:>10.2}\n{:<26} {:>10.2}\n{:<26} {:>10.2}\n",
            "generated",
            self.num_generated,
            "pct_distinct_within_set",
            self.pct_distinct_within_set,
            "pct_novel_vs_training",
            self.pct_novel_vs_training,
            "avg_length_words",
            self.avg_length_words
        )
    }
}

/// Analytic parameter count of the relational caption model with the given
/// dimensions and vocabulary size (`dims.vocab_size` is ignored). Token
/// embedding and output projection are untied and the projection has no
/// bias, so the total grows by exactly `2 × d_model` per vocabulary entry.
pub fn param_count(vocab_size: usize, dims: &ModelConfig) -> ParamCount {
    let d = dims.d_model;
    let ff = dims.d_ff;
    let ffn = d * ff + ff + ff * d + d;
    let layer_norm = 2 * d;
    let appearance = dims.d_in * d + d;
    let encoder_layer = 4 * d * d + 4 * dims.geo_embed_dim * dims.n_heads + ffn + 2 * layer_norm;
    let decoder_layer = 8 * d * d + ffn + 3 * layer_norm;
    let core = appearance + dims.n_enc_layers * encoder_layer + dims.n_dec_layers * decoder_layer;
    let embedding = vocab_size * d;
    let output = d * vocab_size;
    ParamCount {
        vocab_size,
        model_dim: d,
        embedding_params: embedding,
        output_params: output,
        core_params: core,
        total: core + embedding + output,
    }
}

impl ParamCount {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aligned text table of several parameter counts, with the total delta of
/// each row against the first.
pub fn param_table(counts: &[ParamCount]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>10} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "vocab", "d_model", "embedding", "output", "core", "total", "delta"
    );
    let base = counts.first().map(|c| c.total as i64).unwrap_or(0);
    for c in counts {
        let _ = writeln!(
            out,
            "{:>10} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
            c.vocab_size,
            c.model_dim,
            c.embedding_params,
            c.output_params,
            c.core_params,
            c.total,
            c.total as i64 - base
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(lines: &[&str]) -> Corpus {
        Corpus::from_raw(
            lines.iter().enumerate().map(|(i, l)| (i.to_string(), *l)),
            16,
        )
    }

    #[test]
    fn table_one_delta() {
        let dims = ModelConfig::paper();
        let big = param_count(9486, &dims);
        let small = param_count(1085, &dims);
        assert_eq!(big.total - small.total, 8_602_624);
        assert_eq!(big.core_params, small.core_params);
    }

    #[test]
    fn zero_vocab_has_no_embedding_params() {
        let p = param_count(0, &ModelConfig::desk(10));
        assert_eq!(p.embedding_params, 0);
        assert_eq!(p.output_params, 0);
        assert_eq!(p.total, p.core_params);
    }

    #[test]
    fn desk_config_matches_hand_sum() {
        // d_model 32, d_ff 64, d_in 16, 2 heads, geo 8, 2 + 2 layers.
        let cfg = ModelConfig::desk(50);
        let (d, ff, din, heads, geo, v) = (32, 64, 16, 2, 8, 50);
        let ffn = [d * ff, ff, ff * d, d];
        let mut tensors = vec![din * d, d]; // appearance projection
        for _ in 0..2 {
            tensors.extend([d * d; 4]); // W_Q W_K W_V W_o
            tensors.push(4 * geo * heads); // W_G
            tensors.extend(ffn);
            tensors.extend([d; 4]); // two layer norms
        }
        for _ in 0..2 {
            tensors.extend([d * d; 8]);
            tensors.extend(ffn);
            tensors.extend([d; 6]);
        }
        tensors.push(v * d);
        tensors.push(d * v);
        let expected: usize = tensors.iter().sum();
        assert_eq!(param_count(v, &cfg).total, expected);
    }

    #[test]
    fn uniqueness_basics() {
        let train = corpus(&["a cat", "a dog"]);
        let same = vec!["a bird"; 4];
        let r = uniqueness_report(&same, &train);
        assert_eq!(r.pct_distinct_within_set, 25.0);
        assert_eq!(r.pct_novel_vs_training, 100.0);
        assert_eq!(r.avg_length_words, 2.0);
        let copies = vec!["a cat", "a dog"];
        assert_eq!(
            uniqueness_report(&copies, &train).pct_novel_vs_training,
            0.0
        );
    }

    #[test]
    fn uniqueness_mixed_set() {
        let train = corpus(&["a cat on a mat", "a dog in a park", "a man"]);
        let generated = [
            "a cat on a mat",  // training copy
            "a dog in a park", // training copy
            "a red bus",
            "a red bus", // internal duplicate
            "two birds",
            "a kite in the sky",
            "a boy with a ball",
            "a girl",
            "three cows on a hill",
            "a tree",
        ];
        // Set arithmetic by hand: 9 distinct strings, 8 not in training.
        let words = [5, 5, 3, 3, 2, 5, 5, 2, 5, 2];
        let r = uniqueness_report(&generated, &train);
        assert_eq!(r.pct_distinct_within_set, 90.0);
        assert_eq!(r.pct_novel_vs_training, 80.0);
        assert_eq!(
            r.avg_length_words,
            words.iter().sum::<usize>() as f64 / 10.0
        );
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let c = corpus(&["a b"]);
        assert!(vocab_sweep(&c, &[], &TrainerConfig::new(10)).is_err());
    }

    #[test]
    fn large_vocab_keeps_words_whole() {
        let c = corpus(&["the cat sat", "the cat ran", "a cat sat", "the dog ran"]);
        // Singleton words only become pieces when the count floor allows it.
        let cfg = TrainerConfig {
            min_piece_count: 1,
            ..TrainerConfig::new(500)
        };
        let report = vocab_sweep(&c, &[500], &cfg).unwrap();
        let words = c.stats().avg_caption_length_words;
        assert_eq!(report.rows[0].mean_tokens_per_caption, words);
        assert_eq!(report.rows[0].oov_rate, 0.0);
    }

    #[test]
    fn minimal_vocab_approaches_characters() {
        let c = corpus(&["abc abc", "cab"]);
        let k = c.char_inventory().len() * 2 + 1;
        let report = vocab_sweep(&c, &[k], &TrainerConfig::new(k)).unwrap();
        let chars: usize = c.texts().map(|t| t.replace(' ', "").chars().count()).sum();
        let char_mean = chars as f64 / c.len() as f64;
        let mean = report.rows[0].mean_tokens_per_caption;
        // One multi-character piece can only shorten the character fallback.
        assert!(mean <= char_mean && mean >= char_mean / 2.0);
    }

    proptest! {
        #[test]
        fn param_slope_is_twice_model_dim(v in 0usize..20_000, d in 1usize..64) {
            let mut dims = ModelConfig::desk(1);
            dims.d_model = d * 2;
            dims.n_heads = 2;
            let a = param_count(v, &dims).total;
            let b = param_count(v + 1, &dims).total;
            prop_assert_eq!(b - a, 2 * dims.d_model);
        }

        #[test]
        fn uniqueness_is_permutation_invariant(mut gen in proptest::collection::vec("[ab]{1,3}( [ab]{1,2})?", 1..12), seed in 0u64..1000) {
            let train = corpus(&["a", "ab b", "b"]);
            let before = uniqueness_report(&gen, &train);
            let n = gen.len();
            for i in 0..n {
                let j = ((seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % n;
                gen.swap(i, j);
            }
            prop_assert_eq!(uniqueness_report(&gen, &train), before);
        }
    }
}
