//! Treebank ingestion: parsing, tag domains, character vocabulary, and
//! fixed-shape example encoding with context windows.

mod encode;
mod manifest;
pub(crate) mod parse;
mod split;
pub mod toy;
mod vocab;

pub use encode::{
    encode_examples, encode_sentence, fit_len_max, lemma_classes, lemma_start, lemma_stop,
    EncodedExample,
};
pub use manifest::{ColumnManifest, ColumnRole};
pub use parse::{
    ambiguous_surfaces, bind, build_domains, parse_labeled, parse_treebank,
    parse_treebank_with_domains, Treebank,
};
pub use split::{split_corpus, SplitCorpus};
pub use vocab::{build_vocab, CharVocab};

use crate::error::{Error, Result};
use std::collections::HashMap;

/// Label used for missing or inapplicable tag annotations.
pub const UNK_LABEL: &str = "Unk";

/// The six closed morphological tag families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Pos,
    Gender,
    Number,
    Person,
    Case,
    Tam,
}

impl Tag {
    pub const ALL: [Tag; 6] = [
        Tag::Pos,
        Tag::Gender,
        Tag::Number,
        Tag::Person,
        Tag::Case,
        Tag::Tam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Pos => "POS",
            Tag::Gender => "G",
            Tag::Number => "N",
            Tag::Person => "P",
            Tag::Case => "C",
            Tag::Tam => "TAM",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Tag::Pos => 0,
            Tag::Gender => 1,
            Tag::Number => 2,
            Tag::Person => 3,
            Tag::Case => 4,
            Tag::Tam => 5,
        }
    }

    pub fn from_name(s: &str) -> Option<Tag> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Some(Tag::Pos),
            "g" | "gender" => Some(Tag::Gender),
            "n" | "number" => Some(Tag::Number),
            "p" | "person" => Some(Tag::Person),
            "c" | "case" => Some(Tag::Case),
            "tam" => Some(Tag::Tam),
            _ => None,
        }
    }
}

/// One ordered label set, always containing [`UNK_LABEL`] at id 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TagDomain {
    tag: Tag,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagDomain {
    /// Build a domain from raw labels; duplicates collapse, ordering is
    /// `Unk` first then lexicographic, so ids are corpus-order independent.
    pub fn from_labels<I: IntoIterator<Item = String>>(tag: Tag, labels: I) -> TagDomain {
        let mut set: Vec<String> = labels
            .into_iter()
            .filter(|l| l != UNK_LABEL)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut all = Vec::with_capacity(set.len() + 1);
        all.push(UNK_LABEL.to_string());
        all.append(&mut set);
        let index = all
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        TagDomain {
            tag,
            labels: all,
            index,
        }
    }

    /// Rebuild a domain from labels already in id order (checkpoints and
    /// corpus caches). `Unk` must sit at id 0 and labels must be unique.
    pub fn from_ordered(tag: Tag, labels: Vec<String>) -> Result<TagDomain> {
        if labels.first().map(|s| s.as_str()) != Some(UNK_LABEL) {
            return Err(Error::invalid(format!(
                "{} domain must start with {UNK_LABEL}",
                tag.name()
            )));
        }
        let index: HashMap<String, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        if index.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} domain has duplicate labels",
                tag.name()
            )));
        }
        Ok(TagDomain { tag, labels, index })
    }

    pub fn tag(&self) -> Tag {
        self.tag
    }

    /// Number of possible classes for this tag.
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn unk_id(&self) -> usize {
        0
    }
}

/// The six domains, indexed by [`Tag`].
#[derive(Debug, Clone, PartialEq)]
pub struct TagDomains {
    domains: [TagDomain; 6],
}

impl TagDomains {
    pub fn new(domains: [TagDomain; 6]) -> TagDomains {
        TagDomains { domains }
    }

    pub fn get(&self, tag: Tag) -> &TagDomain {
        &self.domains[tag.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &TagDomain> {
        self.domains.iter()
    }

    /// Class counts in tag order (n_POS, ..., n_TAM).
    pub fn class_counts(&self) -> [usize; 6] {
        let mut out = [0; 6];
        for tag in Tag::ALL {
            out[tag.index()] = self.get(tag).n_labels();
        }
        out
    }
}

/// A token's label ids, one per tag domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagSet {
    ids: [usize; 6],
}

impl TagSet {
    pub fn new(ids: [usize; 6]) -> TagSet {
        TagSet { ids }
    }

    pub fn all_unk() -> TagSet {
        TagSet { ids: [0; 6] }
    }

    pub fn get(&self, tag: Tag) -> usize {
        self.ids[tag.index()]
    }

    pub fn set(&mut self, tag: Tag, id: usize) {
        self.ids[tag.index()] = id;
    }

    pub fn ids(&self) -> &[usize; 6] {
        &self.ids
    }

    /// Check every id against its domain size.
    pub fn validate(&self, domains: &TagDomains) -> Result<()> {
        for tag in Tag::ALL {
            let id = self.get(tag);
            let n = domains.get(tag).n_labels();
            if id >= n {
                return Err(Error::invalid(format!(
                    "tag id {id} out of range for {} domain of size {n}",
                    tag.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub tags: TagSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Result<Sentence> {
        if tokens.is_empty() {
            return Err(Error::invalid("sentence must contain at least one token"));
        }
        Ok(Sentence { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A parsed token with its raw label strings, before domain binding.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledToken {
    pub surface: String,
    pub lemma: String,
    pub labels: [String; 6],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_orders_unk_first_then_sorted() {
        let d = TagDomain::from_labels(
            Tag::Pos,
            ["v", "adj", "n", "adj"].iter().map(|s| s.to_string()),
        );
        assert_eq!(d.labels(), &["Unk", "adj", "n", "v"]);
        assert_eq!(d.n_labels(), 4);
        assert_eq!(d.id("adj"), Some(1));
        assert_eq!(d.id("Unk"), Some(0));
        assert_eq!(d.id("missing"), None);
    }

    #[test]
    fn domain_always_contains_unk() {
        let d = TagDomain::from_labels(Tag::Gender, std::iter::empty());
        assert_eq!(d.labels(), &[UNK_LABEL]);
    }

    #[test]
    fn tagset_validates_against_domains() {
        let domains = TagDomains::new([
            TagDomain::from_labels(Tag::Pos, ["n".to_string()]),
            TagDomain::from_labels(Tag::Gender, ["m".to_string()]),
            TagDomain::from_labels(Tag::Number, ["sg".to_string()]),
            TagDomain::from_labels(Tag::Person, ["1".to_string()]),
            TagDomain::from_labels(Tag::Case, ["d".to_string()]),
            TagDomain::from_labels(Tag::Tam, ["ta".to_string()]),
        ]);
        assert!(TagSet::new([1, 1, 1, 1, 1, 1]).validate(&domains).is_ok());
        assert!(TagSet::new([2, 0, 0, 0, 0, 0]).validate(&domains).is_err());
    }
}
