//! Unigram language-model subword tokenizer.
//!
//! Words are segmented independently. The first piece of a word is stored
//! as-is and every following piece of the same word carries a leading `_`,
//! so `headed` segmented as `head|ed` becomes `head _ed`. Detokenization glues
//! `_` pieces onto the preceding word and joins words with single spaces.

mod lattice;
mod trainer;
mod vocab;

pub use lattice::{Lattice, Path, Span, SCORE_TIE_TOLERANCE};
pub use trainer::{
    build_seed_vocab, em_step, prune_vocab, train_unigram, TrainerConfig, MIN_EXPECTED_COUNT,
};
pub use vocab::{char_pieces, piece_width, SubwordVocab};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONTINUATION_MARKER: char = '_';

/// Control pieces occupying ids 0..3 of the vocabulary file and the model's
/// token space.
pub const CONTROL_PIECES: [&str; 3] = ["<pad>", "<bos>", "<eos>"];
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;

pub fn is_continuation(piece: &str) -> bool {
    piece.starts_with(CONTINUATION_MARKER)
}

pub fn marked(piece: &str) -> String {
    let mut s = String::with_capacity(piece.len() + 1);
    s.push(CONTINUATION_MARKER);
    s.push_str(piece);
    s
}

/// Applies the continuation marker to per-word segmentations: the first
/// piece of each word stays bare, later pieces get the `_` prefix.
pub fn mark_continuations<W, P>(words: &[W]) -> Vec<String>
where
    W: AsRef<[P]>,
    P: AsRef<str>,
{
    let mut out = Vec::new();
    for word in words {
        for (i, piece) in word.as_ref().iter().enumerate() {
            let piece = piece.as_ref();
            out.push(if i == 0 {
                piece.to_string()
            } else {
                marked(piece)
            });
        }
    }
    out
}

/// A segmented caption.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub pieces: Vec<String>,
    pub ids: Vec<usize>,
    pub total_score: f64,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }
}

/// Most probable segmentation of a normalized caption.
pub fn viterbi_segment(text: &str, vocab: &SubwordVocab) -> Result<TokenSequence> {
    let mut seq = TokenSequence::default();
    let mut offset = 0;
    for word in text.split(' ') {
        if !word.is_empty() {
            let lattice = Lattice::new(word, vocab).map_err(|e| match e {
                Error::OutOfInventory { ch, position } => Error::OutOfInventory {
                    ch,
                    position: offset + position,
                },
                other => other,
            })?;
            let path = lattice.viterbi(vocab);
            seq.total_score += path.score;
            for span in path.spans {
                seq.pieces.push(vocab.piece(span.id).to_string());
                seq.ids.push(span.id);
            }
        }
        offset += word.chars().count() + 1;
    }
    Ok(seq)
}

pub fn encode(text: &str, vocab: &SubwordVocab) -> Result<TokenSequence> {
    viterbi_segment(text, vocab)
}

/// Σ score over the pieces of `seq`, looked up by piece string.
pub fn sequence_logprob(seq: &TokenSequence, vocab: &SubwordVocab) -> Result<f64> {
    seq.pieces.iter().try_fold(0.0, |acc, piece| {
        vocab
            .id(piece)
            .map(|id| acc + vocab.score(id))
            .ok_or_else(|| Error::UnknownPiece(piece.clone()))
    })
}

/// Rebuilds the caption from marked pieces.
pub fn detokenize<P: AsRef<str>>(pieces: &[P]) -> Result<String> {
    let mut words: Vec<String> = Vec::new();
    for piece in pieces {
        let piece = piece.as_ref();
        match piece.strip_prefix(CONTINUATION_MARKER) {
            Some(rest) => match words.last_mut() {
                Some(word) => word.push_str(rest),
                None => return Err(Error::OrphanContinuation(piece.to_string())),
            },
            None => words.push(piece.to_string()),
        }
    }
    Ok(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn equal_score_vocab(pieces: &[&str]) -> SubwordVocab {
        let mut all: BTreeSet<String> = pieces.iter().map(|s| s.to_string()).collect();
        let mut required = BTreeSet::new();
        for ch in "acteisrlmbng".chars() {
            for p in char_pieces(ch) {
                required.insert(p.clone());
                all.insert(p);
            }
        }
        SubwordVocab::from_weights(all.into_iter().map(|p| (p, 1.0)).collect(), required).unwrap()
    }

    #[test]
    fn marks_continuations() {
        assert_eq!(
            mark_continuations(&[vec!["head", "ed"]]),
            vec!["head", "_ed"]
        );
        assert_eq!(mark_continuations(&[vec!["a"]]), vec!["a"]);
        assert!(mark_continuations::<Vec<&str>, &str>(&[]).is_empty());
    }

    #[test]
    fn detokenizes_examples() {
        assert_eq!(detokenize(&["head", "_ed"]).unwrap(), "headed");
        assert_eq!(
            detokenize(&["a", "cat", "is", "climb", "_ing", "a", "tree"]).unwrap(),
            "a cat is climbing a tree"
        );
        assert_eq!(detokenize::<&str>(&[]).unwrap(), "");
        assert!(matches!(
            detokenize(&["_ed", "head"]),
            Err(Error::OrphanContinuation(_))
        ));
    }

    #[test]
    fn fewest_pieces_win_under_equal_scores() {
        let v = equal_score_vocab(&["a", "cat", "is", "climb", "_ing", "tree"]);
        let seq = viterbi_segment("a cat is climbing a tree", &v).unwrap();
        assert_eq!(
            seq.pieces,
            vec!["a", "cat", "is", "climb", "_ing", "a", "tree"]
        );
        assert_eq!(detokenize(&seq.pieces).unwrap(), "a cat is climbing a tree");
        let expected = sequence_logprob(&seq, &v).unwrap();
        assert!((seq.total_score - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_text_segments_to_nothing() {
        let v = equal_score_vocab(&[]);
        let seq = viterbi_segment("", &v).unwrap();
        assert!(seq.is_empty());
        assert_eq!(seq.total_score, 0.0);
        assert_eq!(sequence_logprob(&seq, &v).unwrap(), 0.0);
    }

    #[test]
    fn out_of_inventory_position_is_caption_offset() {
        let v = equal_score_vocab(&[]);
        match viterbi_segment("a cat zz", &v) {
            Err(Error::OutOfInventory { ch, position }) => assert_eq!((ch, position), ('z', 6)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_piece_in_logprob() {
        let v = equal_score_vocab(&[]);
        let seq = TokenSequence {
            pieces: vec!["zebra".into()],
            ids: vec![0],
            total_score: 0.0,
        };
        assert!(matches!(
            sequence_logprob(&seq, &v),
            Err(Error::UnknownPiece(_))
        ));
    }
}
