//! Per-word segmentation lattice with Viterbi and forward-backward passes.

use crate::error::{Error, Result};

use super::vocab::SubwordVocab;
use super::CONTINUATION_MARKER;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub id: usize,
    pub score: f64,
}

/// All vocabulary pieces matching a word, indexed by start position.
///
/// Positions are character offsets into the word. A span starting at 0 is
/// looked up as a word-initial piece, any other span as a continuation piece.
#[derive(Debug, Clone)]
pub struct Lattice {
    chars: Vec<char>,
    starts: Vec<Vec<Span>>,
}

/// Best path through a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub score: f64,
    pub spans: Vec<Span>,
}

/// Relative score difference below which two segmentations tie.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl Lattice {
    /// Builds the lattice of `word` (a single whitespace-free word).
    pub fn new(word: &str, vocab: &SubwordVocab) -> Result<Self> {
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len();
        let max_len = vocab.max_piece_chars();
        let mut starts = vec![Vec::new(); n];
        for (start, spans) in starts.iter_mut().enumerate() {
            let mut key = String::new();
            if start > 0 {
                key.push(CONTINUATION_MARKER);
            }
            let mut covered = false;
            for end in start + 1..=n.min(start + max_len) {
                key.push(chars[end - 1]);
                if let Some(id) = vocab.id(&key) {
                    covered |= end == start + 1;
                    spans.push(Span {
                        start,
                        end,
                        id,
                        score: vocab.score(id),
                    });
                }
            }
            if !covered {
                return Err(Error::OutOfInventory {
                    ch: chars[start],
                    position: start,
                });
            }
        }
        Ok(Lattice { chars, starts })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn spans_from(&self, start: usize) -> &[Span] {
        &self.starts[start]
    }

    pub fn spans(&self) -> impl Iterator<Item = &Span> {
        self.starts.iter().flatten()
    }

    /// Highest-scoring segmentation.
    ///
    /// Scores within [`SCORE_TIE_TOLERANCE`] (relative) count as tied, since
    /// equal piece multisets can sum to different floats. Ties prefer fewer pieces, then the lexicographically smaller piece at
    /// the earliest differing position.
    pub fn viterbi(&self, vocab: &SubwordVocab) -> Path {
        self.viterbi_excluding(vocab, None)
            .expect("character pieces always complete the lattice")
    }

    /// Viterbi with one piece id removed from the lattice. Returns `None`
    /// when no complete path remains.
    pub fn viterbi_excluding(&self, vocab: &SubwordVocab, excluded: Option<usize>) -> Option<Path> {
        let n = self.chars.len();
        // best[i]: (score, piece count, first span) of the best suffix from i.
        let mut best: Vec<Option<(f64, usize, Option<Span>)>> = vec![None; n + 1];
        best[n] = Some((0.0, 0, None));
        for i in (0..n).rev() {
            let mut cur: Option<(f64, usize, Option<Span>)> = None;
            for span in &self.starts[i] {
                if Some(span.id) == excluded {
                    continue;
                }
                let Some((tail_score, tail_count, _)) = best[span.end] else {
                    continue;
                };
                let cand = (span.score + tail_score, tail_count + 1, Some(*span));
                let better = match &cur {
                    None => true,
                    Some((s, c, Some(cur_span))) => {
                        let tol = SCORE_TIE_TOLERANCE * cand.0.abs().max(s.abs()).max(1.0);
                        if cand.0 > s + tol {
                            true
                        } else if cand.0 < s - tol {
                            false
                        } else {
                            cand.1 < *c
                                || (cand.1 == *c && vocab.piece(span.id) < vocab.piece(cur_span.id))
                        }
                    }
                    Some(_) => unreachable!("non-terminal entries always hold a span"),
                };
                if better {
                    cur = Some(cand);
                }
            }
            best[i] = cur;
        }
        let (score, _, _) = best[0]?;
        let mut spans = Vec::new();
        let mut pos = 0;
        while pos < n {
            let span = best[pos].and_then(|b| b.2)?;
            spans.push(span);
            pos = span.end;
        }
        Some(Path { score, spans })
    }

    /// Log of the total probability of all segmentations.
    pub fn log_partition(&self) -> f64 {
        self.forward()[self.chars.len()]
    }

    fn forward(&self) -> Vec<f64> {
        let n = self.chars.len();
        let mut alpha = vec![f64::NEG_INFINITY; n + 1];
        alpha[0] = 0.0;
        for i in 0..n {
            if alpha[i] == f64::NEG_INFINITY {
                continue;
            }
            for span in &self.starts[i] {
                alpha[span.end] = log_add(alpha[span.end], alpha[i] + span.score);
            }
        }
        alpha
    }

    fn backward(&self) -> Vec<f64> {
        let n = self.chars.len();
        let mut beta = vec![f64::NEG_INFINITY; n + 1];
        beta[n] = 0.0;
        for i in (0..n).rev() {
            for span in &self.starts[i] {
                beta[i] = log_add(beta[i], span.score + beta[span.end]);
            }
        }
        beta
    }

    /// Adds `weight` times the posterior expected count of every piece to
    /// `counts` and returns the log partition function.
    pub fn accumulate_expected_counts(&self, weight: f64, counts: &mut [f64]) -> f64 {
        let alpha = self.forward();
        let beta = self.backward();
        let log_z = alpha[self.chars.len()];
        for span in self.spans() {
            let posterior = (alpha[span.start] + span.score + beta[span.end] - log_z).exp();
            counts[span.id] += weight * posterior;
        }
        log_z
    }
}
