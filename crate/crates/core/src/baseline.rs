//! Baseline tokenizers: a frequency-thresholded word vocabulary and a
//! character-level BPE whose output uses the same continuation markers as
//! the unigram tokenizer, so both share one detokenizer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::unigram::mark_continuations;

pub const UNK: &str = "<unk>";
pub const WORD_SPECIALS: [&str; 4] = [UNK, "<bos>", "<eos>", "<pad>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: u64,
}

impl WordVocab {
    fn from_words(words: Vec<String>, min_freq: u64) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        WordVocab {
            words,
            index,
            min_freq,
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for w in &self.words {
            writeln!(out, "{w}")?;
        }
        Ok(())
    }

    /// Reads one word per line. The threshold is not stored in the file and
    /// comes back as zero.
    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let words = input
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io("<word vocabulary>", e))?;
        Ok(WordVocab::from_words(words, 0))
    }
}

/// Words seen at least `min_freq` times, by descending count then
/// lexicographically, after the special tokens.
pub fn train_word_vocab(corpus: &Corpus, min_freq: u64) -> WordVocab {
    let mut kept: Vec<(&String, u64)> = corpus
        .word_counts()
        .iter()
        .filter(|(_, &n)| n >= min_freq)
        .map(|(w, &n)| (w, n))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let words = WORD_SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(w, _)| w.clone()))
        .collect();
    WordVocab::from_words(words, min_freq)
}

/// Whitespace tokenization with out-of-vocabulary words mapped to `<unk>`.
pub fn word_tokenize(text: &str, vocab: &WordVocab) -> Vec<String> {
    text.split(' ')
        .filter(|w| !w.is_empty())
        .map(|w| {
            if vocab.contains(w) {
                w.to_string()
            } else {
                UNK.to_string()
            }
        })
        .collect()
}

/// Fraction of word tokens in `texts` that map to `<unk>`.
pub fn word_oov_rate<'a>(texts: impl IntoIterator<Item = &'a str>, vocab: &WordVocab) -> f64 {
    let (mut unk, mut total) = (0usize, 0usize);
    for text in texts {
        for tok in word_tokenize(text, vocab) {
            total += 1;
            unk += usize::from(tok == UNK);
        }
    }
    if total == 0 {
        0.0
    } else {
        unk as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    vocab: BTreeSet<String>,
}

pub const BPE_HEADER: &str = "#bpe";

impl BpeModel {
    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{BPE_HEADER}")?;
        for (l, r) in &self.merges {
            writeln!(out, "{l} {r}")?;
        }
        Ok(())
    }

    /// Reads the merge file. Only symbols that take part in merges can be
    /// recovered, so the loaded vocabulary omits characters never merged.
    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h == BPE_HEADER => {}
            _ => {
                return Err(Error::Malformed {
                    line: 1,
                    reason: format!("expected header {BPE_HEADER:?}"),
                })
            }
        }
        let mut merges = Vec::new();
        let mut vocab = BTreeSet::new();
        for (idx, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<bpe model>", e))?;
            let (l, r) = line.split_once(' ').ok_or_else(|| Error::Malformed {
                line: idx + 2,
                reason: "expected `left right`".into(),
            })?;
            vocab.insert(l.to_string());
            vocab.insert(r.to_string());
            vocab.insert(format!("{l}{r}"));
            merges.push((l.to_string(), r.to_string()));
        }
        Ok(BpeModel { merges, vocab })
    }
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) -> bool {
    let mut merged = false;
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let r = symbols.remove(i + 1);
            symbols[i].push_str(&r);
            merged = true;
        }
        i += 1;
    }
    merged
}

/// Merge budget that gives a BPE vocabulary of `vocab_size` symbols: the
/// corpus characters plus one symbol per merge.
pub fn bpe_merges_for_vocab_size(corpus: &Corpus, vocab_size: usize) -> usize {
    vocab_size.saturating_sub(corpus.char_inventory().len())
}

/// Learns up to `num_merges` merges, each the most frequent adjacent pair
/// inside words (ties to the smallest pair), stopping early once no pair
/// occurs at least twice.
pub fn train_bpe(corpus: &Corpus, num_merges: usize) -> BpeModel {
    let mut words: Vec<(Vec<String>, u64)> = corpus
        .word_counts()
        .iter()
        .map(|(w, &n)| (w.chars().map(String::from).collect(), n))
        .collect();
    let mut vocab: BTreeSet<String> = corpus
        .char_inventory()
        .iter()
        .map(|c| c.to_string())
        .collect();
    let mut merges = Vec::with_capacity(num_merges);
    while merges.len() < num_merges {
        let mut pairs: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (symbols, n) in &words {
            for w in symbols.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_insert(0) += n;
            }
        }
        // BTreeMap order makes the first maximum the lexicographically smallest.
        let best = pairs
            .iter()
            .fold(None::<(&(&str, &str), u64)>, |acc, (pair, &n)| match acc {
                Some((_, m)) if m >= n => acc,
                _ => Some((pair, n)),
            });
        let Some(((l, r), count)) = best else { break };
        if count < 2 {
            break;
        }
        let (l, r) = (l.to_string(), r.to_string());
        for (symbols, _) in words.iter_mut() {
            merge_pair(symbols, &l, &r);
        }
        vocab.insert(format!("{l}{r}"));
        merges.push((l, r));
    }
    BpeModel { merges, vocab }
}

/// Applies the merges in training order to each word and marks
/// continuation pieces with `_`.
pub fn bpe_tokenize(text: &str, model: &BpeModel) -> Vec<String> {
    let words: Vec<Vec<String>> = text
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut symbols: Vec<String> = w.chars().map(String::from).collect();
            for (l, r) in &model.merges {
                if symbols.len() < 2 {
                    break;
                }
                merge_pair(&mut symbols, l, r);
            }
            symbols
        })
        .collect();
    mark_continuations(&words)
}
