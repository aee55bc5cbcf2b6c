//! Individual-task vs multi-task comparison: train seven single-task
//! models (each task's weight kept, every other weight zero) and one
//! joint model on the same corpus and seed, and tabulate dev metrics.

use crate::corpus::Tag;
use crate::dataset::EncodedCorpus;
use crate::error::Result;
use crate::layers::LossWeights;
use crate::lingfeat::{FeatureMask, FeaturePool};
use crate::model::{Model, ModelConfig};
use crate::train::joint::{evaluate_split, train_joint, TrainConfig};

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub setting: String,
    pub tag_f1: [f64; 6],
    pub lemma_exact: f64,
    pub bleu: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// Seven single-task rows then the multi-task row.
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("setting,f1_pos,f1_g,f1_n,f1_p,f1_c,f1_tam,lemma_exact,bleu\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.setting,
                r.tag_f1[0],
                r.tag_f1[1],
                r.tag_f1[2],
                r.tag_f1[3],
                r.tag_f1[4],
                r.tag_f1[5],
                r.lemma_exact,
                r.bleu,
            ));
        }
        out
    }

    pub fn row(&self, setting: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }
}

fn run_one(
    corpus: &EncodedCorpus,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    weights: &LossWeights,
    setting: String,
) -> Result<ComparisonRow> {
    let pool = FeaturePool::standard();
    let masks = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
    let mut model = Model::new(
        model_cfg.clone(),
        corpus.vocab.clone(),
        corpus.domains.clone(),
        masks,
        train_cfg.seed,
    )?;
    train_joint(corpus, &mut model, weights, train_cfg)?;
    let split = if corpus.dev.is_empty() {
        &corpus.train
    } else {
        &corpus.dev
    };
    let dev = evaluate_split(&model, split, true, model.config.beam_width)?;
    Ok(ComparisonRow {
        setting,
        tag_f1: dev.tag_acc,
        lemma_exact: dev.lemma_exact.expect("decode requested"),
        bleu: dev.bleu.expect("decode requested"),
    })
}

/// Train the eight settings and report their dev metrics. Single-task
/// settings zero every weight but one, exactly the joint objective with
/// the other contributions switched off.
pub fn run_individual_vs_mt(
    corpus: &EncodedCorpus,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<ComparisonReport> {
    let mut rows = Vec::with_capacity(8);
    for tag in Tag::ALL {
        let w = LossWeights::single_task_tag(tag, weights.tag(tag).max(f64::MIN_POSITIVE));
        rows.push(run_one(
            corpus,
            model_cfg,
            train_cfg,
            &w,
            format!("single:{}", tag.name()),
        )?);
    }
    let w = LossWeights::single_task_lemma(weights.lemma.max(f64::MIN_POSITIVE));
    rows.push(run_one(
        corpus,
        model_cfg,
        train_cfg,
        &w,
        "single:L".to_string(),
    )?);
    rows.push(run_one(
        corpus,
        model_cfg,
        train_cfg,
        weights,
        "multi-task".to_string(),
    )?);
    Ok(ComparisonReport { rows })
}
