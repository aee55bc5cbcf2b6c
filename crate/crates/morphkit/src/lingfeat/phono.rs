//! Character attribute table backing the phonological features.
//!
//! The table ships as an editable text data file (one `char<TAB>key=value;...`
//! line per character) so corrections never require a rebuild. Entries are
//! validated against the feature pool at load time and pre-resolved to slot
//! indices.

use crate::error::{Error, Result};
use crate::lingfeat::pool::FeaturePool;
use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

const DEFAULT_TABLE: &str = include_str!("../../data/phono_default.tsv");

/// Attribute keys and the pool categories their values count into.
const ATTR_CATEGORIES: [(&str, &str); 10] = [
    ("asp", "Aspirated"),
    ("origin", "Origin"),
    ("poa", "PoA"),
    ("mod", "Modifier"),
    ("height", "Height"),
    ("length", "Length"),
    ("v1", "Type-1"),
    ("v2", "Type-2"),
    ("place", "Place"),
    ("manner", "Manner"),
];

fn type_slot(pool: &FeaturePool, value: &str) -> Option<usize> {
    let name = match value {
        "vowel" => "#vowels",
        "vowel-modifier" => "#vowel-modifiers",
        "consonant" => "#consonants",
        "punct" => "#punct",
        "digit" => "#digits",
        "halant" => "#halant",
        "nukta" => "#nuktas",
        _ => return None,
    };
    pool.slot_index(name)
}

/// Immutable per-character attribute table, resolved to pool slots.
#[derive(Debug, Clone)]
pub struct PhonoTable {
    schema: String,
    /// char -> slot indices it bumps; `None`-like "no attributes" entries
    /// hold an empty list.
    entries: HashMap<char, Vec<usize>>,
    /// chars carrying a typed record (used by the count invariant).
    typed: HashMap<char, bool>,
}

impl PhonoTable {
    pub fn parse(text: &str) -> Result<PhonoTable> {
        let pool = FeaturePool::standard();
        let mut schema = None;
        let mut entries: HashMap<char, Vec<usize>> = HashMap::new();
        let mut typed: HashMap<char, bool> = HashMap::new();

        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            if schema.is_none() {
                // Header line: schema=<name> pool=<n>
                let mut name = None;
                let mut pool_n = None;
                for part in line.split_whitespace() {
                    if let Some(v) = part.strip_prefix("schema=") {
                        name = Some(v.to_string());
                    } else if let Some(v) = part.strip_prefix("pool=") {
                        pool_n = Some(v.parse::<usize>().map_err(|_| {
                            Error::Config(format!("phono table line {line_no}: bad pool count"))
                        })?);
                    }
                }
                let (Some(name), Some(pool_n)) = (name, pool_n) else {
                    return Err(Error::Config(format!(
                        "phono table line {line_no}: expected header `schema=<name> pool=<n>`"
                    )));
                };
                if pool_n != pool.len() {
                    return Err(Error::Config(format!(
                        "phono table declares pool={pool_n} but this build's pool has {} slots",
                        pool.len()
                    )));
                }
                schema = Some(name);
                continue;
            }

            let Some((ch_str, attrs_str)) = line.split_once('\t') else {
                return Err(Error::Config(format!(
                    "phono table line {line_no}: expected `char<TAB>attrs`"
                )));
            };
            let mut ch_iter = ch_str.chars();
            let (Some(ch), None) = (ch_iter.next(), ch_iter.next()) else {
                return Err(Error::Config(format!(
                    "phono table line {line_no}: key must be a single character, got {ch_str:?}"
                )));
            };
            if entries.contains_key(&ch) {
                return Err(Error::Config(format!(
                    "phono table line {line_no}: duplicate entry for {ch:?}"
                )));
            }

            let attrs_str = attrs_str.trim();
            if attrs_str == "none" {
                entries.insert(ch, Vec::new());
                typed.insert(ch, false);
                continue;
            }

            let mut slots = Vec::new();
            let mut has_type = false;
            for pair in attrs_str.split(';') {
                let pair = pair.trim();
                if pair.is_empty() {
                    continue;
                }
                let Some((key, value)) = pair.split_once('=') else {
                    return Err(Error::Config(format!(
                        "phono table line {line_no}: expected key=value, got {pair:?}"
                    )));
                };
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "type" => {
                        let slot = type_slot(pool, value).ok_or_else(|| {
                            Error::Config(format!(
                                "phono table line {line_no}: unknown type {value:?}"
                            ))
                        })?;
                        slots.push(slot);
                        has_type = true;
                    }
                    "diph" => {
                        if value != "0" {
                            slots.push(pool.slot_index("Is_diphthong").expect("pool slot"));
                        }
                    }
                    other => {
                        let category = ATTR_CATEGORIES
                            .iter()
                            .find(|(k, _)| *k == other)
                            .map(|(_, c)| *c)
                            .ok_or_else(|| {
                                Error::Config(format!(
                                    "phono table line {line_no}: unknown attribute key {other:?}"
                                ))
                            })?;
                        let slot = pool.attr_slot(category, value).ok_or_else(|| {
                            Error::Config(format!(
                                "phono table line {line_no}: {category} has no value {value:?}"
                            ))
                        })?;
                        slots.push(slot);
                    }
                }
            }
            if !has_type {
                return Err(Error::Config(format!(
                    "phono table line {line_no}: entry for {ch:?} is missing type="
                )));
            }
            entries.insert(ch, slots);
            typed.insert(ch, true);
        }

        let schema = schema.ok_or_else(|| Error::Config("phono table: missing header".into()))?;
        Ok(PhonoTable {
            schema,
            entries,
            typed,
        })
    }

    pub fn load(path: &Path) -> Result<PhonoTable> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        PhonoTable::parse(&text)
    }

    /// The table shipped with the crate.
    pub fn bundled() -> &'static PhonoTable {
        static TABLE: OnceLock<PhonoTable> = OnceLock::new();
        TABLE.get_or_init(|| PhonoTable::parse(DEFAULT_TABLE).expect("bundled table parses"))
    }

    pub fn schema(&self) -> &str {
        &self.schema
    }

    pub fn has_entry(&self, c: char) -> bool {
        self.entries.contains_key(&c)
    }

    /// Whether `c` carries a typed attribute record.
    pub fn is_typed(&self, c: char) -> bool {
        self.typed.get(&c).copied().unwrap_or(false)
    }

    /// Pool slots this character bumps, if it has an entry.
    pub fn slots_for(&self, c: char) -> Option<&[usize]> {
        self.entries.get(&c).map(|v| v.as_slice())
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }
}
