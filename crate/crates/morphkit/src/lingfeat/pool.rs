//! The linguistic feature pool: surface slots plus per-attribute-value
//! phonological count slots.
//!
//! The published inventory names more distinct attribute values than its
//! stated dimension count, so the pool here is the union of every named
//! slot and its size is data, not a constant; loaders validate file headers
//! against [`FeaturePool::len`].

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Bool,
    Count,
    Categorical,
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub name: &'static str,
    pub kind: SlotKind,
}

/// Hash-bucket count for categorical encodings (prefixes, suffixes and
/// neighbor words). Code 0 is the boundary sentinel.
pub const CATEGORICAL_BUCKETS: u64 = 256;

macro_rules! slots {
    ($(($name:literal, $kind:ident)),* $(,)?) => {
        vec![$(Slot { name: $name, kind: SlotKind::$kind }),*]
    };
}

#[derive(Debug)]
pub struct FeaturePool {
    slots: Vec<Slot>,
    by_name: HashMap<&'static str, usize>,
}

impl FeaturePool {
    fn build() -> FeaturePool {
        let slots = slots![
            // Surface
            ("LoT", Count),
            ("is_first", Bool),
            ("is_last", Bool),
            ("pref-1", Categorical),
            ("pref-2", Categorical),
            ("pref-3", Categorical),
            ("suff-1", Categorical),
            ("suff-2", Categorical),
            ("suff-3", Categorical),
            ("suff-4", Categorical),
            ("PW", Categorical),
            ("NW", Categorical),
            // Type-based character counts
            ("#vowels", Count),
            ("#vowel-modifiers", Count),
            ("#consonants", Count),
            ("#punct", Count),
            ("#digits", Count),
            ("#halant", Count),
            ("#nuktas", Count),
            // Aspirated consonants
            ("Aspirated:V", Count),
            ("Aspirated:VL", Count),
            // Script origin
            ("Origin:B", Count),
            ("Origin:DV", Count),
            ("Origin:DN", Count),
            // Diphthongs
            ("Is_diphthong", Count),
            // Place of articulation (modern)
            ("PoA:D", Count),
            ("PoA:LD", Count),
            ("PoA:G", Count),
            // Modifier type (Visarga written VG to avoid the clash with
            // voiced aspiration V)
            ("Modifier:AK", Count),
            ("Modifier:AV", Count),
            ("Modifier:VG", Count),
            // Vowel height
            ("Height:F", Count),
            ("Height:M", Count),
            ("Height:B", Count),
            // Vowel length
            ("Length:L", Count),
            ("Length:S", Count),
            ("Length:M", Count),
            // Vowel type-1
            ("Type-1:L", Count),
            ("Type-1:LM", Count),
            ("Type-1:UM", Count),
            ("Type-1:LH", Count),
            ("Type-1:H", Count),
            // Vowel type-2
            ("Type-2:S", Count),
            ("Type-2:AS", Count),
            ("Type-2:AV", Count),
            ("Type-2:V", Count),
            ("Type-2:SN", Count),
            // Traditional place
            ("Place:DV", Count),
            ("Place:DN", Count),
            ("Place:D", Count),
            ("Place:V", Count),
            ("Place:T", Count),
            ("Place:M", Count),
            ("Place:KT", Count),
            ("Place:JM", Count),
            ("Place:SY", Count),
            // Traditional manner
            ("Manner:SP", Count),
            ("Manner:N", Count),
            ("Manner:PS", Count),
            ("Manner:PK", Count),
            ("Manner:SN", Count),
            ("Manner:AS", Count),
            ("Manner:PV", Count),
            ("Manner:PR", Count),
            ("Manner:S", Count),
        ];
        let by_name = slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name, i))
            .collect();
        FeaturePool { slots, by_name }
    }

    /// The process-wide standard pool.
    pub fn standard() -> &'static FeaturePool {
        static POOL: OnceLock<FeaturePool> = OnceLock::new();
        POOL.get_or_init(FeaturePool::build)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &'static str {
        self.slots[idx].name
    }

    /// Index of the count slot for an attribute value, e.g.
    /// `attr_slot("Height", "M")`.
    pub fn attr_slot(&self, category: &str, value: &str) -> Option<usize> {
        self.slot_index(&format!("{category}:{value}"))
    }

    /// Parse a feature list in the compact notation
    /// `Surface: LoT, is_first, pref-1/3, suff-1/2; Type: #punct; Height: M/B`
    /// into slot indices. Within an item, `/` alternates either trailing
    /// numbers sharing the item's prefix (`pref-1/3`) or whole names
    /// (`PW/NW`, `M/B`).
    pub fn parse_feature_spec(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for group in text.split(';') {
            let group = group.trim().trim_end_matches('.');
            if group.is_empty() {
                continue;
            }
            let (category, items) = match group.split_once(':') {
                Some((c, rest)) => (c.trim().trim_end_matches(':'), rest.trim()),
                None => ("", group),
            };
            if items.is_empty() {
                // Bare category such as `Is_diphthong`.
                let idx = self.resolve(category, category)?;
                out.push(idx);
                continue;
            }
            for item in items.split(',') {
                let item = item.trim();
                if item.is_empty() {
                    continue;
                }
                let parts: Vec<&str> = item.split('/').collect();
                let first = parts[0].trim();
                out.push(self.resolve(category, first)?);
                for alt in &parts[1..] {
                    let alt = alt.trim();
                    let full = if alt.chars().all(|c| c.is_ascii_digit()) {
                        match first.rfind('-') {
                            Some(pos) => format!("{}-{}", &first[..pos], alt),
                            None => alt.to_string(),
                        }
                    } else {
                        alt.to_string()
                    };
                    out.push(self.resolve(category, &full)?);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    fn resolve(&self, category: &str, name: &str) -> Result<usize> {
        let canon_cat = canonical_category(category);
        let candidate = match canon_cat {
            "" | "Surface" => canonical_surface(name),
            "Type" => canonical_type_count(name),
            cat => format!("{cat}:{name}"),
        };
        // Bare names (`Is_diphthong`) resolve directly.
        self.slot_index(&candidate)
            .or_else(|| self.slot_index(name))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "feature {name:?} (category {category:?}) names no pool slot"
                ))
            })
    }
}

fn canonical_category(cat: &str) -> &str {
    match cat.trim() {
        "Aspirated" | "Aspiration" => "Aspirated",
        "Origin" => "Origin",
        "PoA" => "PoA",
        "Modifier" | "Modifier type" => "Modifier",
        "Height" => "Height",
        "Length" => "Length",
        "Type-1" | "type-1" => "Type-1",
        "Type-2" | "type-2" => "Type-2",
        "Place" => "Place",
        "Manner" => "Manner",
        "Type" => "Type",
        "Surface" => "Surface",
        other => other,
    }
}

fn canonical_surface(name: &str) -> String {
    name.trim().to_string()
}

fn canonical_type_count(name: &str) -> String {
    let n = name.trim().trim_start_matches('#').to_ascii_lowercase();
    let canon = match n.as_str() {
        "vowel" | "vowels" => "#vowels",
        "vowel-modifier" | "vowel-modifiers" | "vowel_modifiers" => "#vowel-modifiers",
        "cons" | "consonant" | "consonants" => "#consonants",
        "punct" | "punctuation" | "punctuations" => "#punct",
        "digit" | "digits" => "#digits",
        "halant" | "halants" => "#halant",
        "nukta" | "nuktas" => "#nuktas",
        _ => return format!("#{n}"),
    };
    canon.to_string()
}

/// A token's feature values, ordered by the pool's slot order.
/// Boolean slots are 0/1, counts are non-negative, categorical slots are
/// hash codes normalized into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(pool: &FeaturePool) -> FeatureVector {
        FeatureVector(vec![0.0; pool.len()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Per-slot inclusion bits produced by the feature selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask(pub Vec<bool>);

impl FeatureMask {
    pub fn all_ones(n: usize) -> FeatureMask {
        FeatureMask(vec![true; n])
    }

    pub fn all_zeros(n: usize) -> FeatureMask {
        FeatureMask(vec![false; n])
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> FeatureMask {
        let mut bits = vec![false; n];
        for &i in indices {
            bits[i] = true;
        }
        FeatureMask(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn bitstring(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Result<FeatureMask> {
        let bits: Result<Vec<bool>> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("bad mask bit {other:?}"))),
            })
            .collect();
        Ok(FeatureMask(bits?))
    }
}

/// Keep the slots whose mask bit is set, preserving order.
pub fn apply_mask(v: &FeatureVector, m: &FeatureMask) -> Result<FeatureVector> {
    if v.len() != m.len() {
        return Err(Error::Shape {
            op: "apply_mask",
            lhs: vec![v.len()],
            rhs: vec![m.len()],
        });
    }
    Ok(FeatureVector(
        v.0.iter()
            .zip(&m.0)
            .filter_map(|(&x, &keep)| keep.then_some(x))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_has_unique_names() {
        let pool = FeaturePool::standard();
        assert_eq!(pool.by_name.len(), pool.len());
        assert_eq!(pool.slot_index("LoT"), Some(0));
        assert!(pool.len() > 54, "union pool exceeds the quoted dimension");
    }

    #[test]
    fn apply_mask_identity_and_empty() {
        let pool = FeaturePool::standard();
        let v = FeatureVector((0..pool.len()).map(|i| i as f64).collect());
        let all = apply_mask(&v, &FeatureMask::all_ones(pool.len())).unwrap();
        assert_eq!(all, v);
        let none = apply_mask(&v, &FeatureMask::all_zeros(pool.len())).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn apply_mask_rejects_length_mismatch() {
        let v = FeatureVector(vec![1.0, 2.0]);
        assert!(apply_mask(&v, &FeatureMask::all_ones(3)).is_err());
    }

    #[test]
    fn parse_spec_expands_alternatives() {
        let pool = FeaturePool::standard();
        let got = pool
            .parse_feature_spec("Surface: LoT, pref-1/3, PW/NW; Height: M/B")
            .unwrap();
        let want: Vec<usize> = ["LoT", "pref-1", "pref-3", "PW", "NW", "Height:M", "Height:B"]
            .iter()
            .map(|n| pool.slot_index(n).unwrap())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(got, want);
    }

    /// A full optimized POS feature list in the compact notation resolves
    /// slot-for-slot; these fixtures pin the naming map.
    #[test]
    fn reference_pos_row_resolves() {
        let pool = FeaturePool::standard();
        let spec = "Surface: LoT, is_first, pref-1/3, suff-1/2/3, PW/NW; \
                    Type: #punct, #digits; Aspirated: VL; Is_diphthong; PoA: G; \
                    Height: M/B; Length: L/M; Type-1: LM/H; Type-2: AV/V; \
                    Place: DV/KT; Manner: SP/PK/SN";
        let idx = pool.parse_feature_spec(spec).unwrap();
        assert_eq!(idx.len(), 27);
        let names: Vec<&str> = idx.iter().map(|&i| pool.name(i)).collect();
        for expect in [
            "LoT", "is_first", "pref-1", "pref-3", "suff-1", "suff-2", "suff-3", "PW", "NW",
            "#punct", "#digits", "Aspirated:VL", "Is_diphthong", "PoA:G", "Height:M", "Height:B",
            "Length:L", "Length:M", "Type-1:LM", "Type-1:H", "Type-2:AV", "Type-2:V", "Place:DV",
            "Place:KT", "Manner:SP", "Manner:PK", "Manner:SN",
        ] {
            assert!(names.contains(&expect), "missing {expect}");
        }
    }

    /// Every fixture feature list resolves without orphan names.
    #[test]
    fn all_reference_rows_resolve() {
        let pool = FeaturePool::standard();
        let rows = [
            // Gender
            "Surface: is_last, suff-1/3, PW; Type: #vowels, #nuktas, #digits, #consonants; \
             Aspirated: VL; Origin: DV; Height: M; Length: M/L; PoA: D/LD; \
             Place: DV/V/M/KT; Manner: N/S/PK",
            // Number
            "Surface: LoT, pref-1, suff-1/3, PW/NW; Type: #nuktas, #punctuations; \
             Aspirated: VL; Origin: DV; Is_diphthong; PoA: D; Height: F; Length: S/M; \
             Type-1: LH; Type-2: S/AS/AV; Place: D/T; Manner: N/SP/PV/PK/AS",
            // Person
            "Surface: is_first, pref-3, suff-3, PW/NW; Type: #vowels, #nuktas, #punct, #digits; \
             Aspirated: VL; Origin: B/DN; Height: F/M/B; Length: S; PoA: D/G; \
             Type-1: UM/LH/H; Type-2: S/AS/AV; Place: DV/D/V; Manner: SP/AS",
            // Case
            "Surface: LoT, is_last, NW; Type: #nuktas, #punct, #digits; Aspirated: VL; \
             Height: F/M; Length: L/S; Is_diphthong; Type-1: UM/LH; Place: DV/V/T/M/KT; \
             Manner: N/SP/PV",
            // TAM
            "Surface: LoT, is_first, is_last, pref-1/2/3, suff-3/4, PW/NW; \
             Type: #vowels, #nuktas, #digits; Aspirated: VL; Is_diphthong; Height: F; \
             Length: L/M; Origin: DV/B/DN; PoA: LD/D/G; Type-1: UM/LH/H; Type-2: AS/AV/V; \
             Place: D/T; Manner: SN",
        ];
        for row in rows {
            pool.parse_feature_spec(row)
                .unwrap_or_else(|e| panic!("row {row:?}: {e}"));
        }
    }

    #[test]
    fn bitstring_round_trip() {
        let m = FeatureMask::from_indices(6, &[0, 2, 5]);
        assert_eq!(m.bitstring(), "101001");
        assert_eq!(FeatureMask::from_bitstring("101001").unwrap(), m);
        assert_eq!(m.count_ones(), 3);
    }
}
