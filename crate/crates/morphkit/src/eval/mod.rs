//! Evaluation suite: 0-1 accuracies over tags and tag combinations,
//! character-level BLEU, Levenshtein distance, and error-category buckets.

mod metrics;
mod report;

pub use metrics::{
    char_bleu, combined_accuracy, lemma_accuracy, levenshtein, levenshtein_graphemes,
    mean_levenshtein, mean_levenshtein_graphemes, mean_sentence_char_bleu, tag_accuracy,
    AnalysisRow, Field,
};
pub use report::{error_report, evaluate, per_class_csv, standard_rows, ErrorBuckets, EvalReport};
