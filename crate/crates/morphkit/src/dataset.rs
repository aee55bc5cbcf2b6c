//! Glue between ingestion and training: encoded examples zipped with
//! their linguistic features, grouped by sentence and split, plus the
//! on-disk corpus cache and the feature-selection dataset view.

use crate::corpus::{
    encode_sentence, CharVocab, EncodedExample, Sentence, SplitCorpus, Tag, TagDomain,
    TagDomains, TagSet,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::lingfeat::{extract, extract_codes, FeaturePool, FeatureVector, PhonoTable};
use crate::select::SelectionDataset;
use std::path::Path;

/// One training/evaluation item: the encoded example plus its full
/// feature vector and the strings needed for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct DataItem {
    pub example: EncodedExample,
    pub features: FeatureVector,
    pub surface: String,
    pub lemma: String,
}

/// An encoded corpus with its vocabulary and domains, ready to train on.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub vocab: CharVocab,
    pub domains: TagDomains,
    pub len_max: usize,
    pub cw: usize,
    pub train: Vec<Vec<DataItem>>,
    pub dev: Vec<Vec<DataItem>>,
    pub test: Vec<Vec<DataItem>>,
}

impl EncodedCorpus {
    pub fn n_items(&self) -> (usize, usize, usize) {
        let count = |s: &[Vec<DataItem>]| s.iter().map(|v| v.len()).sum();
        (count(&self.train), count(&self.dev), count(&self.test))
    }

    /// Flat view over one split's items.
    pub fn flat(split: &[Vec<DataItem>]) -> Vec<&DataItem> {
        split.iter().flatten().collect()
    }
}

fn encode_split(
    sentences: &[Sentence],
    vocab: &CharVocab,
    cw: usize,
    len_max: usize,
    truncate: bool,
    pool: &FeaturePool,
    table: &PhonoTable,
) -> Result<Vec<Vec<DataItem>>> {
    let mut out = Vec::with_capacity(sentences.len());
    for sent in sentences {
        let examples = encode_sentence(sent, vocab, cw, len_max, truncate)?;
        let mut items = Vec::with_capacity(examples.len());
        for (i, example) in examples.into_iter().enumerate() {
            let tok = &sent.tokens[i];
            let prev = i.checked_sub(1).map(|j| sent.tokens[j].surface.as_str());
            let next = sent.tokens.get(i + 1).map(|t| t.surface.as_str());
            let features = extract(pool, &tok.surface, i, prev, next, table);
            items.push(DataItem {
                example,
                features,
                surface: tok.surface.clone(),
                lemma: tok.lemma.clone(),
            });
        }
        out.push(items);
    }
    Ok(out)
}

/// Encode all three splits against one vocabulary and domain set.
pub fn build_encoded_corpus(
    split: &SplitCorpus,
    vocab: CharVocab,
    domains: TagDomains,
    cw: usize,
    len_max: usize,
    truncate: bool,
    table: &PhonoTable,
) -> Result<EncodedCorpus> {
    let pool = FeaturePool::standard();
    Ok(EncodedCorpus {
        train: encode_split(&split.train, &vocab, cw, len_max, truncate, pool, table)?,
        dev: encode_split(&split.dev, &vocab, cw, len_max, truncate, pool, table)?,
        test: encode_split(&split.test, &vocab, cw, len_max, truncate, pool, table)?,
        vocab,
        domains,
        len_max,
        cw,
    })
}

/// Per-token rows for the feature selector: raw feature codes as inputs,
/// one tag's label ids as classes.
pub fn selection_dataset(
    sentences: &[Sentence],
    tag: Tag,
    table: &PhonoTable,
) -> Result<SelectionDataset> {
    let pool = FeaturePool::standard();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for sent in sentences {
        for (i, tok) in sent.tokens.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| sent.tokens[j].surface.as_str());
            let next = sent.tokens.get(i + 1).map(|t| t.surface.as_str());
            x.push(extract_codes(pool, &tok.surface, i, prev, next, table));
            y.push(tok.tags.get(tag));
        }
    }
    SelectionDataset::new(x, y)
}

// ---------------------------------------------------------------------
// Corpus cache: a line-based text format with an embedded vocabulary.
// ---------------------------------------------------------------------

const CACHE_MAGIC: &str = "morphkit-corpus v1";

fn ids_field(ids: &[usize]) -> String {
    ids.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn floats_field(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Serialize an encoded corpus. One header block, then per split one
/// `split` line with `sent`/`ex` records; `ex` fields are tab-separated.
pub fn cache_to_string(c: &EncodedCorpus) -> String {
    let pool = FeaturePool::standard();
    let mut out = String::new();
    out.push_str(CACHE_MAGIC);
    out.push('\n');
    out.push_str(&format!("lenmax {}\n", c.len_max));
    out.push_str(&format!("cw {}\n", c.cw));
    out.push_str(&format!("pool {}\n", pool.len()));
    let codepoints: Vec<String> = c
        .vocab
        .chars()
        .iter()
        .map(|ch| (*ch as u32).to_string())
        .collect();
    out.push_str(&format!("vocab {}\n", codepoints.join(" ")));
    for tag in Tag::ALL {
        out.push_str(&format!(
            "domain\t{}\t{}\n",
            tag.name(),
            c.domains.get(tag).labels().join("\t")
        ));
    }
    for (name, split) in [("train", &c.train), ("dev", &c.dev), ("test", &c.test)] {
        out.push_str(&format!("split {name}\n"));
        for sent in split {
            out.push_str("sent\n");
            for item in sent {
                let ex = &item.example;
                let ctx_flat: Vec<usize> =
                    ex.context_ids.iter().flatten().copied().collect();
                out.push_str(&format!(
                    "ex\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    ex.position,
                    ids_field(&ex.word_ids),
                    ids_field(&ctx_flat),
                    ids_field(&ex.gold_lemma_ids),
                    ids_field(ex.gold_tags.ids()),
                    floats_field(item.features.values()),
                    item.surface,
                    item.lemma,
                ));
            }
        }
    }
    out
}

pub fn write_cache(c: &EncodedCorpus, path: &Path) -> Result<()> {
    write_atomic(path, &cache_to_string(c))
}

fn parse_ids(s: &str, what: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(' ')
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::invalid(format!("corpus cache: bad {what} id {t:?}")))
        })
        .collect()
}

/// Parse a cache produced by [`cache_to_string`].
pub fn cache_from_string(text: &str) -> Result<EncodedCorpus> {
    let pool = FeaturePool::standard();
    let mut lines = text.lines().enumerate();
    let Some((_, magic)) = lines.next() else {
        return Err(Error::invalid("corpus cache: empty file"));
    };
    if magic != CACHE_MAGIC {
        return Err(Error::invalid(format!(
            "corpus cache: bad magic {magic:?}, expected {CACHE_MAGIC:?}"
        )));
    }
    let mut len_max = None;
    let mut cw = None;
    let mut vocab = None;
    let mut domains: Vec<TagDomain> = Vec::new();
    let mut splits: [Vec<Vec<DataItem>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut current_split: Option<usize> = None;

    for (ln, line) in lines {
        let line_no = ln + 1;
        let bad = |msg: String| Error::Parse {
            path: "corpus cache".into(),
            line: line_no,
            msg,
        };
        if line.is_empty() {
            continue;
        }
        if let Some(v) = line.strip_prefix("lenmax ") {
            len_max = Some(v.parse::<usize>().map_err(|_| bad("bad lenmax".into()))?);
        } else if let Some(v) = line.strip_prefix("cw ") {
            cw = Some(v.parse::<usize>().map_err(|_| bad("bad cw".into()))?);
        } else if let Some(v) = line.strip_prefix("pool ") {
            let n = v.parse::<usize>().map_err(|_| bad("bad pool".into()))?;
            if n != pool.len() {
                return Err(bad(format!(
                    "cache was built with pool size {n}; this build has {}",
                    pool.len()
                )));
            }
        } else if let Some(v) = line.strip_prefix("vocab ") {
            let chars: Vec<char> = v
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<u32>()
                        .ok()
                        .and_then(char::from_u32)
                        .ok_or_else(|| bad(format!("bad codepoint {t:?}")))
                })
                .collect::<Result<_>>()?;
            vocab = Some(CharVocab::from_chars(chars));
        } else if let Some(rest) = line.strip_prefix("domain\t") {
            let mut fields = rest.split('\t');
            let name = fields.next().unwrap_or_default();
            let tag = Tag::from_name(name)
                .ok_or_else(|| bad(format!("unknown domain tag {name:?}")))?;
            let labels: Vec<String> = fields.map(|s| s.to_string()).collect();
            domains.push(TagDomain::from_ordered(tag, labels)?);
        } else if let Some(name) = line.strip_prefix("split ") {
            current_split = Some(match name {
                "train" => 0,
                "dev" => 1,
                "test" => 2,
                _ => return Err(bad(format!("unknown split {name:?}"))),
            });
        } else if line == "sent" {
            let idx = current_split.ok_or_else(|| bad("sent before split".into()))?;
            splits[idx].push(Vec::new());
        } else if let Some(rest) = line.strip_prefix("ex\t") {
            let idx = current_split.ok_or_else(|| bad("ex before split".into()))?;
            let sent = splits[idx]
                .last_mut()
                .ok_or_else(|| bad("ex before sent".into()))?;
            let fields: Vec<&str> = rest.split('\t').collect();
            if fields.len() != 8 {
                return Err(bad(format!("ex record has {} fields, expected 8", fields.len())));
            }
            let lm = len_max.ok_or_else(|| bad("ex before lenmax".into()))?;
            let cw_v = cw.ok_or_else(|| bad("ex before cw".into()))?;
            let position = fields[0]
                .parse::<usize>()
                .map_err(|_| bad("bad position".into()))?;
            let word_ids = parse_ids(fields[1], "word")?;
            let ctx_flat = parse_ids(fields[2], "context")?;
            let gold_lemma_ids = parse_ids(fields[3], "lemma")?;
            let tag_ids = parse_ids(fields[4], "tag")?;
            if word_ids.len() != lm || ctx_flat.len() != 2 * cw_v * lm || tag_ids.len() != 6 {
                return Err(bad("ex record shape mismatch".into()));
            }
            let features: Vec<f64> = if fields[5].is_empty() {
                Vec::new()
            } else {
                fields[5]
                    .split(' ')
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| bad(format!("bad feature value {t:?}")))
                    })
                    .collect::<Result<_>>()?
            };
            if features.len() != pool.len() {
                return Err(bad("feature vector length mismatch".into()));
            }
            let context_ids = ctx_flat.chunks(lm).map(|c| c.to_vec()).collect();
            sent.push(DataItem {
                example: EncodedExample {
                    word_ids,
                    context_ids,
                    gold_tags: TagSet::new(
                        tag_ids.try_into().expect("checked six tag ids"),
                    ),
                    gold_lemma_ids,
                    position,
                },
                features: FeatureVector(features),
                surface: fields[6].to_string(),
                lemma: fields[7].to_string(),
            });
        } else {
            return Err(bad(format!("unrecognized line {line:?}")));
        }
    }

    let vocab = vocab.ok_or_else(|| Error::invalid("corpus cache: missing vocab"))?;
    if domains.len() != 6 {
        return Err(Error::invalid(format!(
            "corpus cache: found {} domains, expected 6",
            domains.len()
        )));
    }
    domains.sort_by_key(|d| d.tag().index());
    let [train, dev, test] = splits;
    Ok(EncodedCorpus {
        vocab,
        domains: TagDomains::new(domains.try_into().expect("six domains")),
        len_max: len_max.ok_or_else(|| Error::invalid("corpus cache: missing lenmax"))?,
        cw: cw.ok_or_else(|| Error::invalid("corpus cache: missing cw"))?,
        train,
        dev,
        test,
    })
}

pub fn read_cache(path: &Path) -> Result<EncodedCorpus> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    cache_from_string(&text)
}

/// Build the toy corpus end to end: parse, bind, split, encode.
pub fn toy_encoded_corpus(cw: usize, len_max: usize) -> Result<EncodedCorpus> {
    let labeled = crate::corpus::toy::sentences();
    let domains = crate::corpus::build_domains(&labeled);
    let sentences = crate::corpus::bind("toy", labeled, &domains)?;
    let vocab = crate::corpus::build_vocab(&sentences);
    let split = crate::corpus::split_corpus(&sentences, (0.8, 0.1, 0.1), 13)?;
    build_encoded_corpus(
        &split,
        vocab,
        domains,
        cw,
        len_max,
        false,
        PhonoTable::bundled(),
    )
}

/// The toy corpus with every sentence in the training split (the
/// overfit-capacity setting; dev metrics fall back to train).
pub fn toy_encoded_corpus_unsplit(cw: usize, len_max: usize) -> Result<EncodedCorpus> {
    let labeled = crate::corpus::toy::sentences();
    let domains = crate::corpus::build_domains(&labeled);
    let sentences = crate::corpus::bind("toy", labeled, &domains)?;
    let vocab = crate::corpus::build_vocab(&sentences);
    let split = SplitCorpus {
        train: sentences,
        dev: Vec::new(),
        test: Vec::new(),
    };
    build_encoded_corpus(
        &split,
        vocab,
        domains,
        cw,
        len_max,
        false,
        PhonoTable::bundled(),
    )
}
