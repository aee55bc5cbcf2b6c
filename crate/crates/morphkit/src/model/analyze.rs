//! Full-sentence analysis: context-aware tagging plus beam-decoded lemmas.

use crate::corpus::{Tag, TagSet};
use crate::error::Result;
use crate::eval::AnalysisRow;
use crate::lingfeat::{extract, FeaturePool, PhonoTable};
use crate::model::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One analyzed token: predicted tag ids and labels, the decoded lemma,
/// and the per-head probability vectors.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub surface: String,
    pub lemma: String,
    pub tags: TagSet,
    pub labels: [String; 6],
    pub probs: [Vec<f64>; 6],
}

/// Per-token outcome; an overlong token fails alone without aborting the
/// rest of the sentence.
#[derive(Debug, Clone)]
pub enum AnalyzedToken {
    Ok(Analysis),
    Failed { surface: String, error: String },
}

impl AnalyzedToken {
    /// Render as an output line mirroring the ingestion schema
    /// (`surface lemma pos g n p c tam`, tab-separated, `-` for Unk).
    /// Failed tokens echo their surface with empty predictions.
    pub fn to_tsv_line(&self) -> String {
        match self {
            AnalyzedToken::Ok(a) => {
                let labels: Vec<&str> = a
                    .labels
                    .iter()
                    .map(|l| if l == "Unk" { "-" } else { l.as_str() })
                    .collect();
                format!("{}\t{}\t{}", a.surface, a.lemma, labels.join("\t"))
            }
            AnalyzedToken::Failed { surface, .. } => {
                format!("{surface}\t{surface}\t-\t-\t-\t-\t-\t-")
            }
        }
    }

    /// View as an evaluation row (failed tokens keep their surface as the
    /// lemma and all-Unk labels).
    pub fn to_row(&self) -> AnalysisRow {
        match self {
            AnalyzedToken::Ok(a) => AnalysisRow {
                surface: a.surface.clone(),
                lemma: a.lemma.clone(),
                labels: a.labels.clone(),
            },
            AnalyzedToken::Failed { surface, .. } => AnalysisRow {
                surface: surface.clone(),
                lemma: surface.clone(),
                labels: std::array::from_fn(|_| "Unk".to_string()),
            },
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Analyze one pre-tokenized sentence. Inference only: dropout and noise
/// are inactive, repeated calls give identical results. Characters outside
/// the vocabulary map to the unknown-character id.
pub fn analyze(model: &Model, table: &PhonoTable, words: &[String]) -> Result<Vec<AnalyzedToken>> {
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let pool = FeaturePool::standard();
    let cfg = &model.config;
    let pad_vec = vec![model.vocab.pad_id(); cfg.len_max];

    // Context words too long for the window are truncated: only the
    // center token's length is a hard constraint.
    let encoded: Vec<Result<Vec<usize>>> = words
        .iter()
        .map(|w| model.vocab.encode_word(w, cfg.len_max))
        .collect();
    let context_of = |i: usize| -> Vec<usize> {
        match &encoded[i] {
            Ok(ids) => ids.clone(),
            Err(_) => {
                let shortened: String = words[i].chars().take(cfg.len_max).collect();
                model
                    .vocab
                    .encode_word(&shortened, cfg.len_max)
                    .expect("truncated word fits")
            }
        }
    };

    let mut out = Vec::with_capacity(words.len());
    for (i, word) in words.iter().enumerate() {
        let word_ids = match &encoded[i] {
            Ok(ids) => ids.clone(),
            Err(e) => {
                out.push(AnalyzedToken::Failed {
                    surface: word.clone(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        let mut context_ids = Vec::with_capacity(2 * cfg.cw);
        for off in (1..=cfg.cw).rev() {
            context_ids.push(match i.checked_sub(off) {
                Some(j) => context_of(j),
                None => pad_vec.clone(),
            });
        }
        for off in 1..=cfg.cw {
            context_ids.push(if i + off < words.len() {
                context_of(i + off)
            } else {
                pad_vec.clone()
            });
        }
        let example = crate::corpus::EncodedExample {
            word_ids: word_ids.clone(),
            context_ids,
            gold_tags: TagSet::all_unk(),
            gold_lemma_ids: Vec::new(),
            position: i,
        };
        let prev = i.checked_sub(1).map(|j| words[j].as_str());
        let next = words.get(i + 1).map(|s| s.as_str());
        let features = extract(pool, word, i, prev, next, table);

        let mut tape = crate::autodiff::Tape::new();
        let vars = model.register_params(&mut tape, |_| false);
        // Inference mode: the RNG is never consulted.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs_vars = model.tag_forward(&mut tape, &vars, &example, &features, false, &mut rng)?;
        let probs: [Vec<f64>; 6] =
            std::array::from_fn(|k| tape.value(probs_vars[k]).data().to_vec());
        let mut tags = TagSet::all_unk();
        let mut labels: [String; 6] = std::array::from_fn(|_| String::new());
        for tag in Tag::ALL {
            let id = argmax(&probs[tag.index()]);
            tags.set(tag, id);
            labels[tag.index()] = model.domains.get(tag).label(id).to_string();
        }
        let lemma = model.decode_lemma_string(&word_ids, cfg.beam_width)?;
        out.push(AnalyzedToken::Ok(Analysis {
            surface: word.clone(),
            lemma,
            tags,
            labels,
            probs,
        }));
    }
    Ok(out)
}
