//! The full evaluation report: the standard analysis rows (single tags and
//! the published combinations), lemma metrics, and heuristic error buckets.

use crate::corpus::{CharVocab, Tag};
use crate::error::Result;
use crate::eval::metrics::{
    char_bleu, combined_accuracy, levenshtein, mean_levenshtein, mean_levenshtein_graphemes,
    mean_sentence_char_bleu, AnalysisRow, Field,
};

/// The analysis rows reported for every run, labels kept verbatim so
/// reports diff cleanly.
pub fn standard_rows() -> Vec<(&'static str, Vec<Field>)> {
    use Field::{Lemma as L, Tag as T};
    vec![
        ("L", vec![L]),
        ("POS", vec![T(Tag::Pos)]),
        ("G", vec![T(Tag::Gender)]),
        ("N", vec![T(Tag::Number)]),
        ("P", vec![T(Tag::Person)]),
        ("C", vec![T(Tag::Case)]),
        ("TAM", vec![T(Tag::Tam)]),
        ("L + C", vec![L, T(Tag::Case)]),
        (
            "G + N + P",
            vec![T(Tag::Gender), T(Tag::Number), T(Tag::Person)],
        ),
        (
            "G + N + P + C",
            vec![T(Tag::Gender), T(Tag::Number), T(Tag::Person), T(Tag::Case)],
        ),
        (
            "L + G + N + P",
            vec![L, T(Tag::Gender), T(Tag::Number), T(Tag::Person)],
        ),
        (
            "L + G + N + P + C",
            vec![L, T(Tag::Gender), T(Tag::Number), T(Tag::Person), T(Tag::Case)],
        ),
        (
            "L + POS + G + N + P + C + TAM",
            vec![
                L,
                T(Tag::Pos),
                T(Tag::Gender),
                T(Tag::Number),
                T(Tag::Person),
                T(Tag::Case),
                T(Tag::Tam),
            ],
        ),
    ]
}

/// Heuristic error buckets. These are proxies for the published error
/// taxonomy, counted over mispredicted tokens only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorBuckets {
    pub total_error_tokens: usize,
    pub hyphenated: usize,
    pub single_char: usize,
    pub oov_char: usize,
    pub lemma_last_char_repeated: usize,
    pub lemma_off_by_one: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// (analysis label, accuracy) in the standard row order.
    pub rows: Vec<(String, f64)>,
    pub corpus_char_bleu: f64,
    pub mean_sentence_char_bleu: f64,
    /// Over Unicode scalar values (the default reading).
    pub mean_levenshtein: f64,
    /// Over extended grapheme clusters, where a base plus its combining
    /// marks counts as one symbol.
    pub mean_levenshtein_graphemes: f64,
    pub errors: ErrorBuckets,
}

fn any_field_error(pred: &AnalysisRow, gold: &AnalysisRow) -> bool {
    pred.lemma != gold.lemma || pred.labels != gold.labels
}

/// `pred` is `gold` plus one or more repeats of gold's final character.
fn is_last_char_recurrence(pred: &str, gold: &str) -> bool {
    if pred == gold || !pred.starts_with(gold) {
        return false;
    }
    let Some(last) = gold.chars().last() else {
        return false;
    };
    pred[gold.len()..].chars().all(|c| c == last)
}

/// Count error-category proxies. The OOV bucket needs a vocabulary and
/// stays zero without one.
pub fn error_report(
    pred: &[AnalysisRow],
    gold: &[AnalysisRow],
    vocab: Option<&CharVocab>,
) -> ErrorBuckets {
    let mut b = ErrorBuckets::default();
    for (p, g) in pred.iter().zip(gold) {
        if !any_field_error(p, g) {
            continue;
        }
        b.total_error_tokens += 1;
        if g.surface.contains('-') {
            b.hyphenated += 1;
        }
        if g.surface.chars().count() == 1 {
            b.single_char += 1;
        }
        if let Some(v) = vocab {
            if g.surface.chars().any(|c| !v.contains(c)) {
                b.oov_char += 1;
            }
        }
        if p.lemma != g.lemma {
            if is_last_char_recurrence(&p.lemma, &g.lemma) {
                b.lemma_last_char_repeated += 1;
            }
            if levenshtein(&p.lemma, &g.lemma) == 1 {
                b.lemma_off_by_one += 1;
            }
        }
    }
    b
}

/// Compute every metric of the report.
pub fn evaluate(
    pred: &[AnalysisRow],
    gold: &[AnalysisRow],
    vocab: Option<&CharVocab>,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for (label, combo) in standard_rows() {
        rows.push((label.to_string(), combined_accuracy(pred, gold, &combo)?));
    }
    let pred_lemmas: Vec<String> = pred.iter().map(|r| r.lemma.clone()).collect();
    let gold_lemmas: Vec<String> = gold.iter().map(|r| r.lemma.clone()).collect();
    Ok(EvalReport {
        rows,
        corpus_char_bleu: char_bleu(&pred_lemmas, &gold_lemmas, 4)?,
        mean_sentence_char_bleu: mean_sentence_char_bleu(&pred_lemmas, &gold_lemmas, 4)?,
        mean_levenshtein: mean_levenshtein(pred, gold)?,
        mean_levenshtein_graphemes: mean_levenshtein_graphemes(pred, gold)?,
        errors: error_report(pred, gold, vocab),
    })
}

impl EvalReport {
    /// Human-readable rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Analysis accuracies (0-1):\n");
        for (label, acc) in &self.rows {
            out.push_str(&format!("  {label:<32} {:.4}\n", acc));
        }
        out.push_str(&format!(
            "Lemma char-BLEU (corpus, 4-gram):       {:.3}\n",
            self.corpus_char_bleu
        ));
        out.push_str(&format!(
            "Lemma char-BLEU (mean sentence, +1):    {:.3}\n",
            self.mean_sentence_char_bleu
        ));
        out.push_str(&format!(
            "Mean Levenshtein distance (scalars):    {:.3}\n",
            self.mean_levenshtein
        ));
        out.push_str(&format!(
            "Mean Levenshtein distance (graphemes):  {:.3}\n",
            self.mean_levenshtein_graphemes
        ));
        out.push_str("Error buckets (heuristic proxies, error tokens only):\n");
        let e = &self.errors;
        out.push_str(&format!("  total error tokens       {}\n", e.total_error_tokens));
        out.push_str(&format!("  hyphenated surface       {}\n", e.hyphenated));
        out.push_str(&format!("  single-char surface      {}\n", e.single_char));
        out.push_str(&format!("  OOV char in surface      {}\n", e.oov_char));
        out.push_str(&format!(
            "  lemma last-char repeat   {}\n",
            e.lemma_last_char_repeated
        ));
        out.push_str(&format!("  lemma off by one char    {}\n", e.lemma_off_by_one));
        out
    }

    /// Machine-readable CSV; analysis rows keep their verbatim labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (label, acc) in &self.rows {
            out.push_str(&format!("\"{label}\",{acc}\n"));
        }
        out.push_str(&format!("char_bleu_corpus,{}\n", self.corpus_char_bleu));
        out.push_str(&format!(
            "char_bleu_mean_sentence,{}\n",
            self.mean_sentence_char_bleu
        ));
        out.push_str(&format!("mean_levenshtein,{}\n", self.mean_levenshtein));
        out.push_str(&format!(
            "mean_levenshtein_graphemes,{}\n",
            self.mean_levenshtein_graphemes
        ));
        let e = &self.errors;
        out.push_str(&format!("err_total,{}\n", e.total_error_tokens));
        out.push_str(&format!("err_hyphenated,{}\n", e.hyphenated));
        out.push_str(&format!("err_single_char,{}\n", e.single_char));
        out.push_str(&format!("err_oov_char,{}\n", e.oov_char));
        out.push_str(&format!(
            "err_lemma_last_char_repeat,{}\n",
            e.lemma_last_char_repeated
        ));
        out.push_str(&format!("err_lemma_off_by_one,{}\n", e.lemma_off_by_one));
        out
    }
}

/// Per-tag, per-class precision/recall/F1 as CSV (the raw numbers behind
/// precision-recall plots).
pub fn per_class_csv(pred: &[AnalysisRow], gold: &[AnalysisRow]) -> Result<String> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(crate::error::Error::invalid(
            "per-class report needs equal non-empty lists",
        ));
    }
    let mut out = String::from("tag,class,precision,recall,f1,support\n");
    for tag in Tag::ALL {
        let mut classes: Vec<&str> = pred
            .iter()
            .chain(gold)
            .map(|r| r.labels[tag.index()].as_str())
            .collect();
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (p, g) in pred.iter().zip(gold) {
                let pv = p.labels[tag.index()] == class;
                let gv = g.labels[tag.index()] == class;
                match (pv, gv) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            let support = tp + fn_;
            let precision = if tp + fp > 0 {
                tp as f64 / (tp + fp) as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                tp as f64 / support as f64
            } else {
                0.0
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            out.push_str(&format!(
                "{},\"{}\",{},{},{},{}\n",
                tag.name(),
                class,
                precision,
                recall,
                f1,
                support
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(surface: &str, lemma: &str, labels: [&str; 6]) -> AnalysisRow {
        AnalysisRow {
            surface: surface.to_string(),
            lemma: lemma.to_string(),
            labels: labels.map(|s| s.to_string()),
        }
    }

    const OK: [&str; 6] = ["n", "m", "sg", "1", "d", "-"];

    #[test]
    fn perfect_predictions_have_empty_error_report() {
        let gold = vec![row("ab-cd", "ab", OK), row("x", "x", OK)];
        let b = error_report(&gold, &gold, None);
        assert_eq!(b, ErrorBuckets::default());
    }

    #[test]
    fn hyphen_and_recurrence_buckets() {
        let gold = vec![row("ab-cd", "abcd", OK), row("pure", "pura", OK)];
        let mut pred = gold.clone();
        pred[0].labels[0] = "v".to_string(); // misclassified hyphenated token
        pred[1].lemma = "puraa".to_string(); // last char repeated
        let b = error_report(&pred, &gold, None);
        assert_eq!(b.total_error_tokens, 2);
        assert_eq!(b.hyphenated, 1);
        assert_eq!(b.lemma_last_char_repeated, 1);
        assert_eq!(b.lemma_off_by_one, 1, "one extra char is also off-by-one");
    }

    #[test]
    fn report_contains_all_standard_rows() {
        let gold = vec![row("a", "a", OK); 3];
        let rep = evaluate(&gold, &gold, None).unwrap();
        assert_eq!(rep.rows.len(), 13);
        assert!(rep.rows.iter().all(|(_, acc)| *acc == 1.0));
        assert_eq!(rep.corpus_char_bleu, 100.0);
        assert_eq!(rep.mean_levenshtein, 0.0);
        assert_eq!(
            rep.rows.last().unwrap().0,
            "L + POS + G + N + P + C + TAM"
        );
        let csv = rep.to_csv();
        assert!(csv.contains("\"G + N + P + C\",1\n"));
    }

    #[test]
    fn per_class_rows_are_consistent() {
        let gold = vec![
            row("a", "a", OK),
            row("b", "b", ["v", "f", "pl", "2", "o", "ta"]),
            row("c", "c", OK),
        ];
        let mut pred = gold.clone();
        pred[2].labels[0] = "v".to_string(); // one n predicted as v
        let csv = per_class_csv(&pred, &gold).unwrap();
        // POS class n: tp=1 fp=0 fn=1 -> precision 1, recall 0.5
        let n_row = csv
            .lines()
            .find(|l| l.starts_with("POS,\"n\""))
            .expect("row for POS class n");
        let fields: Vec<&str> = n_row.split(',').collect();
        assert_eq!(fields[2], "1");
        assert_eq!(fields[3], "0.5");
        assert_eq!(fields[5], "2");
        // POS class v: tp=1 fp=1 fn=0 -> precision 0.5, recall 1
        let v_row = csv.lines().find(|l| l.starts_with("POS,\"v\"")).unwrap();
        let fields: Vec<&str> = v_row.split(',').collect();
        assert_eq!(fields[2], "0.5");
        assert_eq!(fields[3], "1");
    }

    #[test]
    fn combined_rows_never_exceed_constituents() {
        let gold = vec![
            row("a", "a", OK),
            row("b", "b", ["v", "f", "pl", "2", "o", "ta"]),
            row("c", "c", OK),
        ];
        let mut pred = gold.clone();
        pred[0].lemma = "x".to_string();
        pred[1].labels[1] = "m".to_string();
        let rep = evaluate(&pred, &gold, None).unwrap();
        let get = |label: &str| rep.rows.iter().find(|(l, _)| l == label).unwrap().1;
        assert!(get("L + C") <= get("L").min(get("C")) + 1e-12);
        assert!(get("G + N + P + C") <= get("G + N + P") + 1e-12);
        assert!(get("L + POS + G + N + P + C + TAM") <= get("L + G + N + P + C") + 1e-12);
    }
}
