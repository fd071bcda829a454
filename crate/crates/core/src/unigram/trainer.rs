//! Vocabulary training: seed extraction, EM re-estimation and pruning.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

use super::lattice::Lattice;
use super::vocab::{char_pieces, SubwordVocab};
use super::CONTINUATION_MARKER;

/// Lower bound applied to expected piece counts so that pieces never reach
/// probability zero. Small enough that the likelihood cost stays far below
/// 1e-6 even for seeds of tens of thousands of pieces.
pub const MIN_EXPECTED_COUNT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub target_vocab_size: usize,
    pub seed_size: usize,
    pub max_piece_length: usize,
    pub em_subiterations: usize,
    pub shrink_factor: f64,
    pub min_piece_count: u64,
}

impl TrainerConfig {
    pub fn new(target_vocab_size: usize) -> Self {
        TrainerConfig {
            target_vocab_size,
            seed_size: 20 * target_vocab_size,
            max_piece_length: 16,
            em_subiterations: 2,
            shrink_factor: 0.75,
            min_piece_count: 2,
        }
    }

    fn validate(&self, required: usize) -> Result<()> {
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "shrink_factor must lie in (0, 1), got {}",
                self.shrink_factor
            )));
        }
        if self.max_piece_length == 0 {
            return Err(Error::InvalidConfig(
                "max_piece_length must be positive".into(),
            ));
        }
        if self.target_vocab_size < required + 1 {
            return Err(Error::InvalidConfig(format!(
                "vocabulary size {} is below the {} required character pieces plus one",
                self.target_vocab_size, required
            )));
        }
        Ok(())
    }
}

fn required_pieces(corpus: &Corpus) -> BTreeSet<String> {
    corpus
        .char_inventory()
        .iter()
        .flat_map(|&ch| char_pieces(ch))
        .collect()
}

/// Frequency-ranked substrings within word boundaries plus every character
/// piece, scored by log relative frequency.
pub fn build_seed_vocab(corpus: &Corpus, cfg: &TrainerConfig) -> Result<SubwordVocab> {
    if corpus.word_counts().is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let required = required_pieces(corpus);
    let mut counts: HashMap<String, u64> = HashMap::new();
    for (word, &freq) in corpus.word_counts() {
        let chars: Vec<char> = word.chars().collect();
        for start in 0..chars.len() {
            let mut key = String::new();
            if start > 0 {
                key.push(CONTINUATION_MARKER);
            }
            for end in start + 1..=chars.len().min(start + cfg.max_piece_length) {
                key.push(chars[end - 1]);
                *counts.entry(key.clone()).or_insert(0) += freq;
            }
        }
    }

    let mut candidates: Vec<(&String, u64)> = counts
        .iter()
        .filter(|(piece, &n)| !required.contains(*piece) && n >= cfg.min_piece_count)
        .map(|(p, &n)| (p, n))
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    candidates.truncate(cfg.seed_size);

    let mut weighted: Vec<(String, f64)> = required
        .iter()
        .map(|p| {
            let n = counts.get(p).copied().unwrap_or(0) as f64;
            (p.clone(), n.max(MIN_EXPECTED_COUNT))
        })
        .collect();
    weighted.extend(candidates.into_iter().map(|(p, n)| (p.clone(), n as f64)));
    sort_weighted(&mut weighted);
    SubwordVocab::from_weights(weighted, required)
}

fn sort_weighted(entries: &mut [(String, f64)]) {
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// One EM iteration over the corpus words.
///
/// Returns the re-estimated vocabulary and the corpus log-likelihood under
/// the input vocabulary. Expected counts are accumulated word by word in the
/// corpus' sorted word order.
pub fn em_step(corpus: &Corpus, vocab: &SubwordVocab) -> Result<(SubwordVocab, f64)> {
    let mut counts = vec![0.0; vocab.len()];
    let mut log_likelihood = 0.0;
    for (word, &freq) in corpus.word_counts() {
        let lattice = Lattice::new(word, vocab)?;
        log_likelihood +=
            freq as f64 * lattice.accumulate_expected_counts(freq as f64, &mut counts);
    }
    let floored: Vec<f64> = counts.iter().map(|c| c.max(MIN_EXPECTED_COUNT)).collect();
    let log_total = floored.iter().sum::<f64>().ln();
    let scores = floored.iter().map(|c| c.ln() - log_total).collect();
    Ok((vocab.with_scores(scores), log_likelihood))
}

/// Corpus Viterbi log-likelihood lost when each piece is deleted, with all
/// other scores held fixed. Unused pieces lose nothing.
pub(crate) fn removal_losses(corpus: &Corpus, vocab: &SubwordVocab) -> Result<Vec<f64>> {
    let mut losses = vec![0.0; vocab.len()];
    for (word, &freq) in corpus.word_counts() {
        let lattice = Lattice::new(word, vocab)?;
        let best = lattice.viterbi(vocab);
        let mut used: Vec<usize> = best.spans.iter().map(|s| s.id).collect();
        used.sort_unstable();
        used.dedup();
        for id in used {
            if vocab.is_required(id) {
                continue;
            }
            let alt = lattice
                .viterbi_excluding(vocab, Some(id))
                .expect("character pieces keep the lattice connected");
            losses[id] += freq as f64 * (best.score - alt.score);
        }
    }
    Ok(losses)
}

fn prune_to(corpus: &Corpus, vocab: &SubwordVocab, keep_multi: usize) -> Result<SubwordVocab> {
    let losses = removal_losses(corpus, vocab)?;
    let mut multi: Vec<usize> = (0..vocab.len())
        .filter(|&id| !vocab.is_required(id))
        .collect();
    multi.sort_by(|&a, &b| {
        losses[b]
            .partial_cmp(&losses[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                vocab
                    .score(b)
                    .partial_cmp(&vocab.score(a))
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| vocab.piece(a).cmp(vocab.piece(b)))
    });
    let kept: BTreeSet<usize> = multi.into_iter().take(keep_multi).collect();
    vocab.retain_renormalized(|id| vocab.is_required(id) || kept.contains(&id))
}

/// Drops the multi-character pieces whose removal costs the least corpus
/// likelihood, keeping `floor(keep_fraction × count)` of them. Character
/// pieces always survive.
pub fn prune_vocab(
    corpus: &Corpus,
    vocab: &SubwordVocab,
    keep_fraction: f64,
) -> Result<SubwordVocab> {
    if !(keep_fraction > 0.0 && keep_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "keep_fraction must lie in (0, 1), got {keep_fraction}"
        )));
    }
    let multi = vocab.len() - vocab.required_chars().len();
    let keep = (multi as f64 * keep_fraction).floor() as usize;
    prune_to(corpus, vocab, keep)
}

fn run_em(corpus: &Corpus, mut vocab: SubwordVocab, rounds: usize) -> Result<SubwordVocab> {
    for _ in 0..rounds {
        let (next, ll) = em_step(corpus, &vocab)?;
        debug!("em: size={} log_likelihood={ll:.4}", vocab.len());
        vocab = next;
    }
    Ok(vocab)
}

/// Trains a unigram vocabulary of `cfg.target_vocab_size` pieces.
///
/// Shrinks the seed by EM plus pruning rounds until it is within 10% of the
/// target, then prunes to exactly the target and re-estimates the scores.
/// When the seed holds fewer candidates than requested the result is smaller.
/// Entries are ordered by descending score.
pub fn train_unigram(corpus: &Corpus, cfg: &TrainerConfig) -> Result<SubwordVocab> {
    if corpus.word_counts().is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let required = corpus.char_inventory().len() * 2;
    cfg.validate(required)?;
    let mut vocab = build_seed_vocab(corpus, cfg)?;
    let k = cfg.target_vocab_size;
    let target_multi = k - required;
    debug!("seed vocabulary: {} pieces, target {k}", vocab.len());

    while vocab.len() as f64 > 1.1 * k as f64 {
        vocab = run_em(corpus, vocab, cfg.em_subiterations)?;
        let multi = vocab.len() - required;
        let keep = ((multi as f64 * cfg.shrink_factor).floor() as usize).max(target_multi);
        vocab = prune_to(corpus, &vocab, keep)?;
        debug!("pruned to {} pieces", vocab.len());
    }
    vocab = run_em(corpus, vocab, cfg.em_subiterations)?;
    if vocab.len() > k {
        vocab = prune_to(corpus, &vocab, target_multi)?;
    }
    vocab = run_em(corpus, vocab, cfg.em_subiterations)?;

    let mut entries = vocab.entries().to_vec();
    sort_weighted(&mut entries);
    SubwordVocab::new(entries, vocab.required_chars().clone())
}
