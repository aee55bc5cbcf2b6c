//! Per-corpus column manifest: a small `key=value` text file declaring how
//! treebank columns map onto token fields, since CoNLL exports and UD files
//! disagree on layout.

use crate::corpus::Tag;
use crate::error::{Error, Result};
use std::path::Path;

/// Role a column plays in the token record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Surface,
    Lemma,
    Tag(Tag),
    Ignore,
}

#[derive(Debug, Clone)]
pub struct ColumnManifest {
    roles: Vec<ColumnRole>,
}

impl ColumnManifest {
    /// The layout used by this crate's own exports:
    /// `surface, lemma, pos, gender, number, person, case, tam`.
    pub fn standard() -> ColumnManifest {
        ColumnManifest {
            roles: vec![
                ColumnRole::Surface,
                ColumnRole::Lemma,
                ColumnRole::Tag(Tag::Pos),
                ColumnRole::Tag(Tag::Gender),
                ColumnRole::Tag(Tag::Number),
                ColumnRole::Tag(Tag::Person),
                ColumnRole::Tag(Tag::Case),
                ColumnRole::Tag(Tag::Tam),
            ],
        }
    }

    pub fn parse(text: &str) -> Result<ColumnManifest> {
        let mut columns: Option<Vec<ColumnRole>> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "manifest line {}: expected key=value, got {line:?}",
                    ln + 1
                )));
            };
            if key.trim() == "columns" {
                let mut roles = Vec::new();
                for name in value.split(',') {
                    let name = name.trim();
                    let role = match name.to_ascii_lowercase().as_str() {
                        "surface" | "form" => ColumnRole::Surface,
                        "lemma" => ColumnRole::Lemma,
                        "ignore" | "_" => ColumnRole::Ignore,
                        other => match Tag::from_name(other) {
                            Some(tag) => ColumnRole::Tag(tag),
                            None => {
                                return Err(Error::Config(format!(
                                    "manifest: unknown column role {name:?}"
                                )))
                            }
                        },
                    };
                    roles.push(role);
                }
                columns = Some(roles);
            }
            // Other keys (e.g. name=) are informational.
        }
        let roles = columns.ok_or_else(|| Error::Config("manifest: missing columns=".into()))?;
        let manifest = ColumnManifest { roles };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<ColumnManifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        ColumnManifest::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let surfaces = self
            .roles
            .iter()
            .filter(|r| **r == ColumnRole::Surface)
            .count();
        let lemmas = self
            .roles
            .iter()
            .filter(|r| **r == ColumnRole::Lemma)
            .count();
        if surfaces != 1 {
            return Err(Error::Config(
                "manifest: exactly one surface column required".into(),
            ));
        }
        if lemmas != 1 {
            return Err(Error::Config(
                "manifest: exactly one lemma column required".into(),
            ));
        }
        for tag in Tag::ALL {
            let n = self
                .roles
                .iter()
                .filter(|r| **r == ColumnRole::Tag(tag))
                .count();
            if n > 1 {
                return Err(Error::Config(format!(
                    "manifest: tag column {} declared {n} times",
                    tag.name()
                )));
            }
        }
        Ok(())
    }

    pub fn n_columns(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }
}
