//! Loading any tokenizer artifact by sniffing its first line.

use std::io::BufReader;
use std::path::Path;

use subcap_core::baseline::{bpe_tokenize, word_tokenize, BpeModel, WordVocab, BPE_HEADER, UNK};
use subcap_core::unigram::{detokenize, encode, CONTROL_PIECES};
use subcap_core::SubwordVocab;

use crate::error::{CliError, CliResult};

pub enum Tokenizer {
    Unigram(SubwordVocab),
    Bpe(BpeModel),
    Word(WordVocab),
}

impl Tokenizer {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let first = text.lines().next().unwrap_or("");
        let reader = BufReader::new(text.as_bytes());
        if first == BPE_HEADER {
            Ok(Tokenizer::Bpe(BpeModel::read_from(reader)?))
        } else if first.starts_with(&format!("{}\t", CONTROL_PIECES[0])) {
            Ok(Tokenizer::Unigram(SubwordVocab::read_from(reader)?))
        } else if first == UNK {
            Ok(Tokenizer::Word(WordVocab::read_from(reader)?))
        } else {
            Err(CliError::new(
                "malformed",
                format!("{}: not a tokenizer artifact", path.display()),
            ))
        }
    }

    pub fn unigram(self, path: &Path) -> CliResult<SubwordVocab> {
        match self {
            Tokenizer::Unigram(v) => Ok(v),
            _ => Err(CliError::usage(format!(
                "{} is not a unigram vocabulary",
                path.display()
            ))),
        }
    }

    /// Pieces of one normalized line.
    pub fn encode_line(&self, line: &str) -> CliResult<Vec<String>> {
        Ok(match self {
            Tokenizer::Unigram(v) => encode(line, v)?.pieces,
            Tokenizer::Bpe(m) => bpe_tokenize(line, m),
            Tokenizer::Word(v) => word_tokenize(line, v),
        })
    }

    pub fn decode_line(&self, pieces: &[&str]) -> CliResult<String> {
        if let Tokenizer::Unigram(v) = self {
            if let Some(p) = pieces.iter().find(|p| v.id(p).is_none()) {
                return Err(subcap_core::Error::UnknownPiece(p.to_string()).into());
            }
        }
        match self {
            Tokenizer::Word(_) => Ok(pieces.join(" ")),
            _ => Ok(detokenize(pieces)?),
        }
    }
}
