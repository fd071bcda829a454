//! Greedy and beam-search decoding.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unigram::{BOS_ID, EOS_ID, PAD_ID};

use super::config::RegionSet;
use super::model::{decoder_forward, encoder_forward, EncoderOutput};
use super::params::ModelParams;

/// Supplies next-token log-probabilities for a generated prefix. The prefix
/// excludes `<bos>`; token [`EOS_ID`] ends a hypothesis.
pub trait StepScorer {
    fn next_log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Generated tokens, including the final `<eos>` when finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability per generated token.
    pub fn normalized_score(&self) -> f64 {
        if self.tokens.is_empty() {
            self.log_prob
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }

    /// Tokens without the trailing `<eos>`.
    pub fn content(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS_ID) if self.finished => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Higher normalized score first, then the lexicographically smaller sequence.
fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    let (sa, sb) = (a.normalized_score(), b.normalized_score());
    sa > sb || (sa == sb && a.tokens < b.tokens)
}

fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY || s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(j);
        }
    }
    best
}

/// Picks the arg-max token at every step (ties go to the smaller id) until
/// `<eos>` or `max_len` tokens.
pub fn greedy_decode(scorer: &mut dyn StepScorer, max_len: usize) -> Result<Hypothesis> {
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    while hyp.tokens.len() < max_len {
        let scores = scorer.next_log_probs(&hyp.tokens)?;
        let Some(t) = argmax(&scores) else { break };
        hyp.log_prob += scores[t];
        hyp.tokens.push(t);
        if t == EOS_ID {
            hyp.finished = true;
            break;
        }
    }
    Ok(hyp)
}

/// Length-normalized beam search. Keeps the `beam` most probable open
/// hypotheses per step; finished ones leave the beam. The result is the best
/// finished hypothesis (the best open one when none finished), compared
/// against the greedy hypothesis so the result never scores below it.
pub fn beam_search(scorer: &mut dyn StepScorer, beam: usize, max_len: usize) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::InvalidConfig("beam width must be at least 1".into()));
    }
    let greedy = greedy_decode(scorer, max_len)?;
    let mut open = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        if open.is_empty() {
            break;
        }
        let mut candidates = Vec::new();
        for hyp in &open {
            let scores = scorer.next_log_probs(&hyp.tokens)?;
            for (t, &s) in scores.iter().enumerate() {
                if s == f64::NEG_INFINITY || s.is_nan() {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                candidates.push(Hypothesis {
                    tokens,
                    log_prob: hyp.log_prob + s,
                    finished: t == EOS_ID,
                });
            }
        }
        // Equal lengths within a step, so raw and normalized order agree.
        candidates.sort_by(|a, b| {
            b.log_prob
                .total_cmp(&a.log_prob)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(beam);
        open.clear();
        for c in candidates {
            if c.finished {
                finished.push(c);
            } else {
                open.push(c);
            }
        }
    }
    let pool = if finished.is_empty() { open } else { finished };
    let mut best = greedy;
    for h in pool {
        if better(&h, &best) {
            best = h;
        }
    }
    Ok(best)
}

/// Scores continuations with the caption decoder; `<pad>` and `<bos>` are
/// never proposed.
pub struct DecoderScorer<'a> {
    encoded: EncoderOutput,
    params: &'a ModelParams,
}

impl<'a> DecoderScorer<'a> {
    pub fn new(regions: &RegionSet, params: &'a ModelParams) -> Result<Self> {
        Ok(DecoderScorer {
            encoded: encoder_forward(regions, params)?,
            params,
        })
    }

    /// Longest generation the positional table allows.
    pub fn max_generation_len(&self) -> usize {
        self.params.config().max_seq_len.saturating_sub(1)
    }
}

impl StepScorer for DecoderScorer<'_> {
    fn next_log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut input = Vec::with_capacity(prefix.len() + 1);
        input.push(BOS_ID);
        input.extend_from_slice(prefix);
        let logits = decoder_forward(&self.encoded, &input, self.params)?;
        let mut row: Array1<f64> = logits.row(logits.nrows() - 1).to_owned();
        row[PAD_ID] = f64::NEG_INFINITY;
        row[BOS_ID] = f64::NEG_INFINITY;
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(row.iter().map(|v| v - log_z).collect())
    }
}

/// Decodes a caption for `regions`. `beam == None` selects greedy decoding.
/// `max_len` is clipped to what the model's positional table allows.
pub fn generate(
    regions: &RegionSet,
    params: &ModelParams,
    beam: Option<usize>,
    max_len: usize,
) -> Result<Hypothesis> {
    let mut scorer = DecoderScorer::new(regions, params)?;
    let max_len = max_len.min(scorer.max_generation_len());
    match beam {
        None => greedy_decode(&mut scorer, max_len),
        Some(b) => beam_search(&mut scorer, b, max_len),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Log-probabilities looked up by prefix; unknown prefixes force `<eos>`.
    struct Table(Vec<(Vec<usize>, Vec<f64>)>);

    impl StepScorer for Table {
        fn next_log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
            Ok(self
                .0
                .iter()
                .find(|(p, _)| p == prefix)
                .map(|(_, s)| s.clone())
                .unwrap_or_else(|| vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0]))
        }
    }

    fn ln(v: &[f64]) -> Vec<f64> {
        v.iter().map(|p| p.ln()).collect()
    }

    #[test]
    fn beam_finds_sequence_greedy_misses() {
        // Token 0 looks best first but leads to a flat distribution.
        let mut table = Table(vec![
            (vec![], ln(&[0.5, 0.4, 0.1])),
            (vec![0], ln(&[0.35, 0.35, 0.3])),
            (vec![1], ln(&[0.02, 0.02, 0.96])),
            (vec![0, 0], ln(&[0.01, 0.01, 0.98])),
            (vec![0, 1], ln(&[0.01, 0.01, 0.98])),
        ]);
        let greedy = greedy_decode(&mut table, 3).unwrap();
        assert_eq!(greedy.tokens, vec![0, 0, 2]);
        let beam = beam_search(&mut table, 2, 3).unwrap();
        assert_eq!(beam.tokens, vec![1, 2]);
        assert!(beam.normalized_score() > greedy.normalized_score());
    }

    #[test]
    fn beam_one_is_greedy() {
        let mut table = Table(vec![
            (vec![], ln(&[0.3, 0.3, 0.4])),
            (vec![2], ln(&[0.3, 0.3, 0.4])),
        ]);
        let g = greedy_decode(&mut table, 4).unwrap();
        let b = beam_search(&mut table, 1, 4).unwrap();
        assert_eq!(g, b);
        assert_eq!(g.tokens, vec![2]);
    }

    #[test]
    fn zero_beam_rejected() {
        let mut table = Table(vec![]);
        assert!(beam_search(&mut table, 0, 3).is_err());
    }

    #[test]
    fn unfinished_when_budget_runs_out() {
        let mut table = Table(vec![
            (vec![], ln(&[0.9, 0.05, 0.05])),
            (vec![0], ln(&[0.9, 0.05, 0.05])),
        ]);
        let h = greedy_decode(&mut table, 2).unwrap();
        assert_eq!(h.tokens, vec![0, 0]);
        assert!(!h.finished);
        assert_eq!(h.content(), &[0, 0]);
    }
}
