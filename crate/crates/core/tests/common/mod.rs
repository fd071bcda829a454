//! Exhaustive-enumeration helpers shared by the oracle suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use subcap_core::lm::{Hypothesis, StepScorer};
use subcap_core::unigram::EOS_ID;
use subcap_core::SubwordVocab;

pub const ALPHABET: [char; 3] = ['a', 'b', 'c'];

/// Every segmentation of `word` into vocabulary pieces, first piece bare and
/// the rest marked.
pub fn segmentations(word: &str, vocab: &SubwordVocab) -> Vec<Vec<String>> {
    fn go(
        chars: &[char],
        start: usize,
        vocab: &SubwordVocab,
        cur: &mut Vec<String>,
        out: &mut Vec<Vec<String>>,
    ) {
        if start == chars.len() {
            out.push(cur.clone());
            return;
        }
        for end in start + 1..=chars.len() {
            let body: String = chars[start..end].iter().collect();
            let piece = if start == 0 { body } else { format!("_{body}") };
            if vocab.id(&piece).is_some() {
                cur.push(piece);
                go(chars, end, vocab, cur, out);
                cur.pop();
            }
        }
    }
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    go(&chars, 0, vocab, &mut Vec::new(), &mut out);
    out
}

pub fn path_score(path: &[String], vocab: &SubwordVocab) -> f64 {
    path.iter().map(|p| vocab.score(vocab.id(p).unwrap())).sum()
}

pub fn all_words(max_len: usize) -> Vec<String> {
    let mut words = vec![String::new()];
    let mut out = Vec::new();
    for _ in 0..max_len {
        words = words
            .iter()
            .flat_map(|w| ALPHABET.iter().map(move |c| format!("{w}{c}")))
            .collect();
        out.extend(words.iter().cloned());
    }
    out
}

pub fn required() -> BTreeSet<String> {
    ALPHABET
        .iter()
        .flat_map(|c| [c.to_string(), format!("_{c}")])
        .collect()
}

/// Character pieces plus a random selection of longer pieces, all with
/// random (or, with `flat`, equal) scores.
pub fn random_vocab(rng: &mut ChaCha8Rng, flat: bool) -> SubwordVocab {
    let mut pieces: BTreeSet<String> = required();
    let extra = rng.gen_range(3..15);
    while pieces.len() < 6 + extra {
        let len = rng.gen_range(2..=4);
        let body: String = (0..len).map(|_| ALPHABET[rng.gen_range(0..3)]).collect();
        pieces.insert(if rng.gen_bool(0.5) {
            body
        } else {
            format!("_{body}")
        });
    }
    let entries = pieces
        .into_iter()
        .map(|p| {
            let s = if flat {
                -1.0
            } else {
                rng.gen_range(-6.0..-0.5)
            };
            (p, s)
        })
        .collect();
    SubwordVocab::new(entries, required()).unwrap()
}

/// Best segmentation by enumeration: highest score, with near-equal scores
/// tied and broken by fewer pieces, then the lexicographically smallest
/// sequence.
pub fn oracle_viterbi(word: &str, vocab: &SubwordVocab) -> Vec<String> {
    let paths = segmentations(word, vocab);
    let top = paths
        .iter()
        .map(|p| path_score(p, vocab))
        .fold(f64::NEG_INFINITY, f64::max);
    paths
        .into_iter()
        .filter(|p| (path_score(p, vocab) - top).abs() <= 1e-9 * top.abs().max(1.0))
        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
        .expect("character pieces guarantee a segmentation")
}

/// Hand-set distributions over tokens {0, 1, EOS}; prefixes not listed end
/// the sequence.
pub struct Engineered;

impl StepScorer for Engineered {
    fn next_log_probs(&mut self, prefix: &[usize]) -> subcap_core::Result<Vec<f64>> {
        let probs: [f64; 3] = match prefix {
            [] => [0.45, 0.40, 0.15],
            [0] => [0.34, 0.33, 0.33],
            [1] => [0.01, 0.90, 0.09],
            [0, _] => [0.33, 0.33, 0.34],
            [1, 1] => [0.01, 0.01, 0.98],
            [1, 0] => [0.10, 0.10, 0.80],
            _ => [0.2, 0.2, 0.6],
        };
        Ok(probs.iter().map(|p| p.ln()).collect())
    }
}

/// Best finished sequence of at most `max_len` tokens by length-normalized
/// log-probability, found by enumerating every sequence.
pub fn enumerate_best(max_len: usize) -> Hypothesis {
    let mut best: Option<Hypothesis> = None;
    let mut frontier = vec![(Vec::<usize>::new(), 0.0)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (prefix, lp) in frontier {
            let scores = Engineered.next_log_probs(&prefix).unwrap();
            for (t, s) in scores.iter().enumerate() {
                let mut tokens = prefix.clone();
                tokens.push(t);
                let h = Hypothesis {
                    tokens: tokens.clone(),
                    log_prob: lp + s,
                    finished: t == EOS_ID,
                };
                if h.finished {
                    if best
                        .as_ref()
                        .is_none_or(|b| h.normalized_score() > b.normalized_score())
                    {
                        best = Some(h);
                    }
                } else {
                    next.push((tokens, lp + s));
                }
            }
        }
        frontier = next;
    }
    best.unwrap()
}
