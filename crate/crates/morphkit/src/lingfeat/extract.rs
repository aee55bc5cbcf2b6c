//! Feature extraction over a token in its sentence context. Pure functions
//! of (token, neighbors, table); trivially parallel across tokens.

use crate::lingfeat::phono::PhonoTable;
use crate::lingfeat::pool::{FeaturePool, FeatureVector, SlotKind, CATEGORICAL_BUCKETS};

/// FNV-1a over UTF-8 bytes; stable across runs and platforms.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hash code of a categorical value; 0 is reserved for the boundary
/// sentinel, real strings land in [1, buckets).
fn cat_code(s: Option<&str>) -> u64 {
    match s {
        None => 0,
        Some(s) => 1 + fnv1a(s) % (CATEGORICAL_BUCKETS - 1),
    }
}

fn normalized(code: u64) -> f64 {
    code as f64 / (CATEGORICAL_BUCKETS - 1) as f64
}

/// First `k` characters, the whole token when it is shorter.
fn prefix(token: &str, k: usize) -> String {
    token.chars().take(k).collect()
}

/// Last `k` characters, the whole token when it is shorter.
fn suffix(token: &str, k: usize) -> String {
    let n = token.chars().count();
    token.chars().skip(n.saturating_sub(k)).collect()
}

fn surface_codes(
    token: &str,
    position: usize,
    prev: Option<&str>,
    next: Option<&str>,
) -> Vec<(&'static str, f64)> {
    vec![
        ("LoT", token.chars().count() as f64),
        ("is_first", if position == 0 { 1.0 } else { 0.0 }),
        ("is_last", if next.is_none() { 1.0 } else { 0.0 }),
        ("pref-1", cat_code(Some(&prefix(token, 1))) as f64),
        ("pref-2", cat_code(Some(&prefix(token, 2))) as f64),
        ("pref-3", cat_code(Some(&prefix(token, 3))) as f64),
        ("suff-1", cat_code(Some(&suffix(token, 1))) as f64),
        ("suff-2", cat_code(Some(&suffix(token, 2))) as f64),
        ("suff-3", cat_code(Some(&suffix(token, 3))) as f64),
        ("suff-4", cat_code(Some(&suffix(token, 4))) as f64),
        ("PW", cat_code(prev) as f64),
        ("NW", cat_code(next) as f64),
    ]
}

/// Surface features only; phonological slots stay zero.
pub fn extract_surface(
    pool: &FeaturePool,
    token: &str,
    position: usize,
    prev: Option<&str>,
    next: Option<&str>,
) -> FeatureVector {
    let mut v = FeatureVector::zeros(pool);
    for (name, raw) in surface_codes(token, position, prev, next) {
        let idx = pool.slot_index(name).expect("surface slot exists");
        v.0[idx] = match pool.slots()[idx].kind {
            SlotKind::Categorical => normalized(raw as u64),
            _ => raw,
        };
    }
    v
}

/// Phonological aggregates only; surface slots stay zero. Characters
/// without a table entry contribute to no slot.
pub fn extract_phonological(pool: &FeaturePool, token: &str, table: &PhonoTable) -> FeatureVector {
    let mut v = FeatureVector::zeros(pool);
    for c in token.chars() {
        if let Some(slots) = table.slots_for(c) {
            for &idx in slots {
                v.0[idx] += 1.0;
            }
        }
    }
    v
}

/// The full feature vector for the neural heads: normalized categorical
/// codes plus raw counts.
pub fn extract(
    pool: &FeaturePool,
    token: &str,
    position: usize,
    prev: Option<&str>,
    next: Option<&str>,
    table: &PhonoTable,
) -> FeatureVector {
    let mut v = extract_phonological(pool, token, table);
    let surf = extract_surface(pool, token, position, prev, next);
    for (idx, &s) in surf.0.iter().enumerate() {
        if s != 0.0 {
            v.0[idx] = s;
        }
    }
    v
}

/// The same features with raw integer codes in the categorical slots,
/// which is what the forest fitness consumes.
pub fn extract_codes(
    pool: &FeaturePool,
    token: &str,
    position: usize,
    prev: Option<&str>,
    next: Option<&str>,
    table: &PhonoTable,
) -> Vec<f64> {
    let mut v = extract_phonological(pool, token, table).0;
    for (name, raw) in surface_codes(token, position, prev, next) {
        let idx = pool.slot_index(name).expect("surface slot exists");
        v[idx] = raw;
    }
    v
}
