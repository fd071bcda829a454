use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::{is_continuation, marked, CONTROL_PIECES};

/// Unigram subword vocabulary: pieces with natural-log probabilities.
///
/// Continuation pieces carry a leading `_` and are distinct entries from
/// their word-initial twins. `required_chars` lists the single-character
/// pieces (both forms) that guarantee every inventory character can be
/// segmented anywhere in a word.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordVocab {
    entries: Vec<(String, f64)>,
    piece_to_id: HashMap<String, usize>,
    required_chars: BTreeSet<String>,
    max_piece_chars: usize,
}

/// Number of characters a piece covers in the text, ignoring the marker.
pub fn piece_width(piece: &str) -> usize {
    let n = piece.chars().count();
    if is_continuation(piece) {
        n - 1
    } else {
        n
    }
}

/// The word-initial and continuation single-character pieces for `ch`.
pub fn char_pieces(ch: char) -> [String; 2] {
    [ch.to_string(), marked(&ch.to_string())]
}

impl SubwordVocab {
    /// Builds a vocabulary from `(piece, log-probability)` pairs.
    ///
    /// Pieces must be unique and every required piece must be present.
    pub fn new(entries: Vec<(String, f64)>, required_chars: BTreeSet<String>) -> Result<Self> {
        let mut piece_to_id = HashMap::with_capacity(entries.len());
        let mut max_piece_chars = 0;
        for (id, (piece, score)) in entries.iter().enumerate() {
            if piece.is_empty() || piece_width(piece) == 0 {
                return Err(Error::InvalidConfig(format!("empty piece at id {id}")));
            }
            if !score.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "piece {piece:?} has non-finite score"
                )));
            }
            if piece_to_id.insert(piece.clone(), id).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate piece {piece:?}")));
            }
            max_piece_chars = max_piece_chars.max(piece_width(piece));
        }
        if let Some(missing) = required_chars
            .iter()
            .find(|p| !piece_to_id.contains_key(*p))
        {
            return Err(Error::InvalidConfig(format!(
                "required piece {missing:?} missing from vocabulary"
            )));
        }
        Ok(SubwordVocab {
            entries,
            piece_to_id,
            required_chars,
            max_piece_chars,
        })
    }

    /// Builds a vocabulary from pieces and linear-space weights, normalizing
    /// them into log-probabilities.
    pub fn from_weights(
        weighted: Vec<(String, f64)>,
        required_chars: BTreeSet<String>,
    ) -> Result<Self> {
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        let log_total = total.ln();
        let entries = weighted
            .into_iter()
            .map(|(p, w)| (p, w.ln() - log_total))
            .collect();
        SubwordVocab::new(entries, required_chars)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn piece(&self, id: usize) -> &str {
        &self.entries[id].0
    }

    pub fn score(&self, id: usize) -> f64 {
        self.entries[id].1
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.piece_to_id.get(piece).copied()
    }

    pub fn required_chars(&self) -> &BTreeSet<String> {
        &self.required_chars
    }

    pub fn is_required(&self, id: usize) -> bool {
        self.required_chars.contains(&self.entries[id].0)
    }

    /// Longest piece width in characters, marker excluded.
    pub fn max_piece_chars(&self) -> usize {
        self.max_piece_chars
    }

    /// Σ exp(score) over all entries.
    pub fn probability_mass(&self) -> f64 {
        self.entries.iter().map(|(_, s)| s.exp()).sum()
    }

    /// Returns a copy with the same pieces and ids but new scores.
    pub(crate) fn with_scores(&self, scores: Vec<f64>) -> Self {
        debug_assert_eq!(scores.len(), self.entries.len());
        let entries = self
            .entries
            .iter()
            .zip(scores)
            .map(|((p, _), s)| (p.clone(), s))
            .collect();
        SubwordVocab {
            entries,
            piece_to_id: self.piece_to_id.clone(),
            required_chars: self.required_chars.clone(),
            max_piece_chars: self.max_piece_chars,
        }
    }

    /// Keeps the entries for which `keep` returns true and renormalizes.
    pub(crate) fn retain_renormalized(&self, mut keep: impl FnMut(usize) -> bool) -> Result<Self> {
        let weighted = self
            .entries
            .iter()
            .enumerate()
            .filter(|(id, _)| keep(*id))
            .map(|(_, (p, s))| (p.clone(), s.exp()))
            .collect();
        SubwordVocab::from_weights(weighted, self.required_chars.clone())
    }

    /// Writes the TSV vocabulary format: three control pieces with score
    /// zero, then one `piece<TAB>score` line per entry in id order.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for control in CONTROL_PIECES {
            writeln!(out, "{control}\t{:.6}", 0.0)?;
        }
        for (piece, score) in &self.entries {
            writeln!(out, "{piece}\t{score:.6}")?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("pieces are valid UTF-8")
    }

    /// Reads the TSV vocabulary format. Every single-character piece becomes
    /// a required piece.
    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            let (piece, score) = line.split_once('\t').ok_or_else(|| Error::Malformed {
                line: idx + 1,
                reason: "expected piece<TAB>score".into(),
            })?;
            if idx < CONTROL_PIECES.len() {
                if piece != CONTROL_PIECES[idx] {
                    return Err(Error::Malformed {
                        line: idx + 1,
                        reason: format!("expected control piece {}", CONTROL_PIECES[idx]),
                    });
                }
                continue;
            }
            let score: f64 = score.parse().map_err(|_| Error::Malformed {
                line: idx + 1,
                reason: format!("bad score {score:?}"),
            })?;
            entries.push((piece.to_string(), score));
        }
        let required = entries
            .iter()
            .filter(|(p, _)| piece_width(p) == 1)
            .map(|(p, _)| p.clone())
            .collect();
        SubwordVocab::new(entries, required)
    }
}
