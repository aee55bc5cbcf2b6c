//! Treebank file reader: UTF-8, tab-separated columns, one token per line,
//! blank line between sentences.

use crate::corpus::manifest::{ColumnManifest, ColumnRole};
use crate::corpus::{
    LabeledToken, Sentence, Tag, TagDomain, TagDomains, TagSet, Token, UNK_LABEL,
};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// A fully parsed corpus: sentences bound to their tag domains.
#[derive(Debug, Clone)]
pub struct Treebank {
    pub sentences: Vec<Sentence>,
    pub domains: TagDomains,
}

/// Split file content into sentences of labeled tokens.
///
/// `-` and empty tag fields normalize to the `Unk` label; `any` is kept as
/// its own label since the two mean different things in the annotation.
pub fn parse_labeled(path_label: &str, text: &str, manifest: &ColumnManifest) -> Result<Vec<Vec<LabeledToken>>> {
    let mut sentences = Vec::new();
    let mut current: Vec<LabeledToken> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != manifest.n_columns() {
            return Err(Error::Parse {
                path: path_label.to_string(),
                line: line_no,
                msg: format!(
                    "expected {} tab-separated columns, found {}",
                    manifest.n_columns(),
                    fields.len()
                ),
            });
        }
        let mut surface = None;
        let mut lemma = None;
        let mut labels: [String; 6] = std::array::from_fn(|_| UNK_LABEL.to_string());
        for (role, field) in manifest.roles().iter().zip(&fields) {
            match role {
                ColumnRole::Surface => surface = Some(field.to_string()),
                ColumnRole::Lemma => lemma = Some(field.to_string()),
                ColumnRole::Tag(tag) => {
                    labels[tag.index()] = normalize_label(field);
                }
                ColumnRole::Ignore => {}
            }
        }
        let surface = surface.expect("manifest guarantees a surface column");
        if surface.is_empty() {
            return Err(Error::Parse {
                path: path_label.to_string(),
                line: line_no,
                msg: "empty surface form".into(),
            });
        }
        let lemma = lemma.expect("manifest guarantees a lemma column");
        let lemma = if lemma.is_empty() || lemma == "-" {
            surface.clone()
        } else {
            lemma
        };
        current.push(LabeledToken {
            surface,
            lemma,
            labels,
        });
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

fn normalize_label(field: &str) -> String {
    let t = field.trim();
    if t.is_empty() || t == "-" || t == "_" {
        UNK_LABEL.to_string()
    } else {
        t.to_string()
    }
}

/// Build tag domains from every label observed in the corpus.
pub fn build_domains(sentences: &[Vec<LabeledToken>]) -> TagDomains {
    let domains: [TagDomain; 6] = std::array::from_fn(|i| {
        let tag = Tag::ALL[i];
        let labels = sentences
            .iter()
            .flatten()
            .map(|t| t.labels[i].clone())
            .collect::<Vec<_>>();
        TagDomain::from_labels(tag, labels)
    });
    TagDomains::new(domains)
}

/// Bind labeled tokens to domain ids; unknown labels are an error here
/// (domain building is over).
pub fn bind(
    path_label: &str,
    sentences: Vec<Vec<LabeledToken>>,
    domains: &TagDomains,
) -> Result<Vec<Sentence>> {
    let mut out = Vec::with_capacity(sentences.len());
    for tokens in sentences {
        let mut bound = Vec::with_capacity(tokens.len());
        for t in tokens {
            let mut tags = TagSet::all_unk();
            for tag in Tag::ALL {
                let label = &t.labels[tag.index()];
                let id = domains.get(tag).id(label).ok_or_else(|| {
                    Error::invalid(format!(
                        "{path_label}: unknown {} label {label:?} on token {:?}",
                        tag.name(),
                        t.surface
                    ))
                })?;
                tags.set(tag, id);
            }
            bound.push(Token {
                surface: t.surface,
                lemma: t.lemma,
                tags,
            });
        }
        out.push(Sentence::new(bound)?);
    }
    Ok(out)
}

/// Parse a treebank in domain-building mode: label sets are collected from
/// the file itself.
pub fn parse_treebank(path: &Path, manifest: &ColumnManifest) -> Result<Treebank> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let label = path.display().to_string();
    let labeled = parse_labeled(&label, &text, manifest)?;
    let domains = build_domains(&labeled);
    let sentences = bind(&label, labeled, &domains)?;
    Ok(Treebank { sentences, domains })
}

/// Parse against existing domains; any label outside them is an error.
pub fn parse_treebank_with_domains(
    path: &Path,
    manifest: &ColumnManifest,
    domains: &TagDomains,
) -> Result<Vec<Sentence>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let label = path.display().to_string();
    let labeled = parse_labeled(&label, &text, manifest)?;
    bind(&label, labeled, domains)
}

/// Surface forms carrying more than one distinct analysis in the corpus,
/// with their distinct-analysis counts. Context is what disambiguates
/// these; the report just flags them.
pub fn ambiguous_surfaces(sentences: &[Vec<LabeledToken>]) -> BTreeMap<String, usize> {
    let mut analyses: BTreeMap<&str, std::collections::BTreeSet<String>> = BTreeMap::new();
    for t in sentences.iter().flatten() {
        let key = format!("{}\u{1}{}", t.lemma, t.labels.join("\u{1}"));
        analyses.entry(&t.surface).or_default().insert(key);
    }
    analyses
        .into_iter()
        .filter(|(_, set)| set.len() > 1)
        .map(|(s, set)| (s.to_string(), set.len()))
        .collect()
}
