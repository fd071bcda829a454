//! Caption corpus ingestion and normalization.
//!
//! Corpus files hold one record per line, `image_id<TAB>caption`. Lines that
//! start with `#` are comments and blank lines are ignored. Every caption is
//! normalized (NFKC, lowercase, collapsed whitespace) and truncated to a
//! maximum number of words before it is stored.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Default word cap applied when loading captions.
pub const DEFAULT_MAX_WORDS: usize = 16;

/// Stand-in for a literal `_` in caption text. The underscore is reserved as
/// the continuation marker of subword pieces, so normalization rewrites it.
pub const UNDERSCORE_SUBSTITUTE: char = '\u{2581}';

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub image_id: String,
    pub text: String,
}

impl Caption {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.text.split(' ').filter(|w| !w.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    captions: Vec<Caption>,
    word_counts: BTreeMap<String, u64>,
    char_inventory: BTreeSet<char>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_captions: usize,
    pub num_images: usize,
    pub total_words: u64,
    pub distinct_words: usize,
    pub avg_caption_length_words: f64,
}

fn normalize_once(text: &str) -> String {
    let folded: String = text.nfkc().collect::<String>().to_lowercase();
    let folded: String = folded
        .nfkc()
        .map(|c| if c == '_' { UNDERSCORE_SUBSTITUTE } else { c })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical caption form: NFKC, lowercase, single spaces, no `_`.
pub fn normalize(text: &str) -> String {
    let mut current = normalize_once(text);
    // Case mapping can (rarely) leave text that NFKC changes again.
    for _ in 0..4 {
        let next = normalize_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Keeps the first `max_words` whitespace-separated words.
pub fn truncate_words(text: &str, max_words: usize) -> String {
    text.split(' ')
        .filter(|w| !w.is_empty())
        .take(max_words)
        .collect::<Vec<_>>()
        .join(" ")
}

impl Corpus {
    /// Builds a corpus from already-normalized captions.
    pub fn from_captions(captions: Vec<Caption>) -> Self {
        let mut word_counts = BTreeMap::new();
        let mut char_inventory = BTreeSet::new();
        for caption in &captions {
            for word in caption.words() {
                *word_counts.entry(word.to_string()).or_insert(0) += 1;
            }
            char_inventory.extend(caption.text.chars().filter(|c| *c != ' '));
        }
        Corpus {
            captions,
            word_counts,
            char_inventory,
        }
    }

    /// Normalizes and truncates raw `(image_id, text)` pairs.
    pub fn from_raw<I, S, T>(records: I, max_words: usize) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let captions = records
            .into_iter()
            .map(|(id, text)| Caption {
                image_id: id.into(),
                text: truncate_words(&normalize(text.as_ref()), max_words),
            })
            .collect();
        Corpus::from_captions(captions)
    }

    /// Parses corpus text in the line format described at module level.
    pub fn parse(input: &str, max_words: usize) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let (id, text) = line.split_once('\t').ok_or_else(|| Error::Malformed {
                line: idx + 1,
                reason: "missing tab separator".into(),
            })?;
            records.push((id.to_string(), text.to_string()));
        }
        Ok(Corpus::from_raw(records, max_words))
    }

    pub fn captions(&self) -> &[Caption] {
        &self.captions
    }

    pub fn word_counts(&self) -> &BTreeMap<String, u64> {
        &self.word_counts
    }

    pub fn char_inventory(&self) -> &BTreeSet<char> {
        &self.char_inventory
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.captions.iter().map(|c| c.text.as_str())
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(self)
    }
}

/// Reads and normalizes a corpus file.
pub fn load_corpus(path: impl AsRef<Path>, max_words: usize) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::parse(&raw, max_words)
}

pub fn corpus_stats(c: &Corpus) -> CorpusStats {
    let num_captions = c.captions.len();
    let num_images = c
        .captions
        .iter()
        .map(|cap| cap.image_id.as_str())
        .collect::<BTreeSet<_>>()
        .len();
    let total_words: u64 = c.word_counts.values().sum();
    let avg = if num_captions > 0 {
        total_words as f64 / num_captions as f64
    } else {
        0.0
    };
    CorpusStats {
        num_captions,
        num_images,
        total_words,
        distinct_words: c.word_counts.len(),
        avg_caption_length_words: avg,
    }
}
