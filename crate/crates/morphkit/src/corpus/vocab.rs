//! Character vocabulary over surfaces and lemmas.

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use std::collections::{BTreeSet, HashMap};

/// Dense character-id table with two sentinels: a padding id and an
/// unknown-character id. Real characters are sorted by codepoint so the
/// table is independent of corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct CharVocab {
    chars: Vec<char>,
    ids: HashMap<char, usize>,
}

impl CharVocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    const SENTINELS: usize = 2;

    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> CharVocab {
        let set: BTreeSet<char> = chars.into_iter().collect();
        let chars: Vec<char> = set.into_iter().collect();
        let ids = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + Self::SENTINELS))
            .collect();
        CharVocab { chars, ids }
    }

    pub fn pad_id(&self) -> usize {
        Self::PAD
    }

    pub fn unk_char_id(&self) -> usize {
        Self::UNK
    }

    /// Total id count, sentinels included.
    pub fn size(&self) -> usize {
        self.chars.len() + Self::SENTINELS
    }

    pub fn encode(&self, c: char) -> usize {
        self.ids.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, c: char) -> bool {
        self.ids.contains_key(&c)
    }

    pub fn decode(&self, id: usize) -> Option<char> {
        if id < Self::SENTINELS {
            None
        } else {
            self.chars.get(id - Self::SENTINELS).copied()
        }
    }

    /// In-vocabulary characters in id order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Encode a word, right-padded to `len_max`.
    pub fn encode_word(&self, word: &str, len_max: usize) -> Result<Vec<usize>> {
        let n = word.chars().count();
        if n > len_max {
            return Err(Error::invalid(format!(
                "token {word:?} has {n} characters, longer than len_max {len_max}"
            )));
        }
        let mut out = Vec::with_capacity(len_max);
        out.extend(word.chars().map(|c| self.encode(c)));
        out.resize(len_max, Self::PAD);
        Ok(out)
    }

    /// Decode ids back to a string, stopping at padding.
    pub fn decode_word(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&id| id != Self::PAD)
            .filter_map(|&id| self.decode(id).or(if id == Self::UNK { Some('\u{FFFD}') } else { None }))
            .collect()
    }
}

/// Collect every distinct character of surfaces and lemmas.
pub fn build_vocab(sentences: &[Sentence]) -> CharVocab {
    let chars = sentences
        .iter()
        .flat_map(|s| &s.tokens)
        .flat_map(|t| t.surface.chars().chain(t.lemma.chars()));
    CharVocab::from_chars(chars)
}
