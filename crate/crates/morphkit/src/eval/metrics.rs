//! Per-tag and combined 0-1 accuracies, Levenshtein distance, and
//! character-level corpus BLEU.

use crate::corpus::Tag;
use crate::error::{Error, Result};
use std::collections::HashMap;

/// One scored token: predicted or gold analysis as label strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisRow {
    pub surface: String,
    pub lemma: String,
    pub labels: [String; 6],
}

/// A field that can participate in a combined accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Lemma,
    Tag(Tag),
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Lemma => "L",
            Field::Tag(t) => t.name(),
        }
    }

    pub fn from_name(s: &str) -> Option<Field> {
        if s.eq_ignore_ascii_case("l") || s.eq_ignore_ascii_case("lemma") {
            return Some(Field::Lemma);
        }
        Tag::from_name(s).map(Field::Tag)
    }
}

fn field_matches(pred: &AnalysisRow, gold: &AnalysisRow, field: Field) -> bool {
    match field {
        Field::Lemma => pred.lemma == gold.lemma,
        Field::Tag(t) => pred.labels[t.index()] == gold.labels[t.index()],
    }
}

fn check_lengths(pred: &[AnalysisRow], gold: &[AnalysisRow]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Shape {
            op: "evaluation",
            lhs: vec![pred.len()],
            rhs: vec![gold.len()],
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("evaluation over an empty corpus"));
    }
    Ok(())
}

/// Fraction of tokens whose predicted label equals gold for one tag.
pub fn tag_accuracy(pred: &[AnalysisRow], gold: &[AnalysisRow], tag: Tag) -> Result<f64> {
    combined_accuracy(pred, gold, &[Field::Tag(tag)])
}

/// A token counts as correct iff every field in the combo matches
/// (lemma compared as an exact string).
pub fn combined_accuracy(
    pred: &[AnalysisRow],
    gold: &[AnalysisRow],
    combo: &[Field],
) -> Result<f64> {
    check_lengths(pred, gold)?;
    if combo.is_empty() {
        return Err(Error::invalid("combined accuracy needs at least one field"));
    }
    let correct = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| combo.iter().all(|&f| field_matches(p, g, f)))
        .count();
    Ok(correct as f64 / pred.len() as f64)
}

/// Exact-match lemma accuracy.
pub fn lemma_accuracy(pred: &[AnalysisRow], gold: &[AnalysisRow]) -> Result<f64> {
    combined_accuracy(pred, gold, &[Field::Lemma])
}

fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Minimal unit-cost insert/delete/substitute edit count over Unicode
/// scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

/// Edit distance over extended grapheme clusters instead of scalars, so a
/// base character plus combining marks counts as one unit (the distinction
/// matters for scripts with dependent vowel signs).
pub fn levenshtein_graphemes(a: &str, b: &str) -> usize {
    use unicode_segmentation::UnicodeSegmentation;
    let a: Vec<&str> = a.graphemes(true).collect();
    let b: Vec<&str> = b.graphemes(true).collect();
    edit_distance(&a, &b)
}

/// Mean Levenshtein distance between predicted and gold lemmas.
pub fn mean_levenshtein(pred: &[AnalysisRow], gold: &[AnalysisRow]) -> Result<f64> {
    check_lengths(pred, gold)?;
    let total: usize = pred
        .iter()
        .zip(gold)
        .map(|(p, g)| levenshtein(&p.lemma, &g.lemma))
        .sum();
    Ok(total as f64 / pred.len() as f64)
}

/// [`mean_levenshtein`] over extended grapheme clusters.
pub fn mean_levenshtein_graphemes(pred: &[AnalysisRow], gold: &[AnalysisRow]) -> Result<f64> {
    check_lengths(pred, gold)?;
    let total: usize = pred
        .iter()
        .zip(gold)
        .map(|(p, g)| levenshtein_graphemes(&p.lemma, &g.lemma))
        .sum();
    Ok(total as f64 / pred.len() as f64)
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut m = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus-level BLEU over character n-grams (n = 1..=max_n), in [0, 100].
///
/// Standard corpus BLEU: modified n-gram precisions pooled over the whole
/// corpus, geometric mean, brevity penalty; any zero pooled precision
/// zeroes the score (no smoothing).
pub fn char_bleu(pred: &[String], gold: &[String], max_n: usize) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Shape {
            op: "char_bleu",
            lhs: vec![pred.len()],
            rhs: vec![gold.len()],
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("char_bleu over an empty corpus"));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut pred_len = 0usize;
    let mut gold_len = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        let pc: Vec<char> = p.chars().collect();
        let gc: Vec<char> = g.chars().collect();
        pred_len += pc.len();
        gold_len += gc.len();
        for n in 1..=max_n {
            let pn = ngram_counts(&pc, n);
            let gn = ngram_counts(&gc, n);
            for (gram, &count) in &pn {
                total[n - 1] += count;
                if let Some(&gcount) = gn.get(gram) {
                    matched[n - 1] += count.min(gcount);
                }
            }
        }
    }
    // Orders with no candidate n-grams at all (every string shorter than
    // n) are vacuous and skipped; an order with candidates but zero
    // matches zeroes the score (no smoothing).
    let mut log_sum = 0.0;
    let mut usable = 0usize;
    for n in 0..max_n {
        if total[n] == 0 {
            continue;
        }
        if matched[n] == 0 {
            return Ok(0.0);
        }
        usable += 1;
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    let geo = if usable == 0 {
        1.0
    } else {
        (log_sum / usable as f64).exp()
    };
    let bp = if pred_len >= gold_len {
        1.0
    } else if pred_len == 0 {
        0.0
    } else {
        (1.0 - gold_len as f64 / pred_len as f64).exp()
    };
    Ok(100.0 * geo * bp)
}

/// Mean of per-string BLEU with add-one smoothing on higher orders; the
/// alternative reading of "averaged over character 4-grams".
pub fn mean_sentence_char_bleu(pred: &[String], gold: &[String], max_n: usize) -> Result<f64> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(Error::invalid("mean sentence BLEU needs equal non-empty lists"));
    }
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gold) {
        let pc: Vec<char> = p.chars().collect();
        let gc: Vec<char> = g.chars().collect();
        let mut log_sum = 0.0;
        let mut usable = 0;
        for n in 1..=max_n {
            let pn = ngram_counts(&pc, n);
            let gn = ngram_counts(&gc, n);
            let total: usize = pn.values().sum();
            if total == 0 {
                continue;
            }
            usable += 1;
            let matched: usize = pn
                .iter()
                .map(|(gram, &c)| c.min(gn.get(gram).copied().unwrap_or(0)))
                .sum();
            // add-one smoothing above unigrams
            let (num, den) = if n == 1 {
                (matched as f64, total as f64)
            } else {
                (matched as f64 + 1.0, total as f64 + 1.0)
            };
            if num == 0.0 {
                log_sum = f64::NEG_INFINITY;
            } else {
                log_sum += (num / den).ln();
            }
        }
        let geo = if usable == 0 || log_sum.is_infinite() {
            0.0
        } else {
            (log_sum / usable as f64).exp()
        };
        let bp = if pc.len() >= gc.len() {
            1.0
        } else if pc.is_empty() {
            0.0
        } else {
            (1.0 - gc.len() as f64 / pc.len() as f64).exp()
        };
        sum += 100.0 * geo * bp;
    }
    Ok(sum / pred.len() as f64)
}
