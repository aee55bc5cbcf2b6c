//! Loss-weight calibration: sweep the shared tag weight over an 11-point
//! grid with the lemma weight as its complement, pick the best dev BLEU,
//! then fine-tune individual sub-optimal tag weights without letting any
//! other task regress.

use crate::corpus::Tag;
use crate::dataset::EncodedCorpus;
use crate::error::Result;
use crate::layers::LossWeights;
use crate::lingfeat::{FeatureMask, FeaturePool};
use crate::model::{Model, ModelConfig};
use crate::train::joint::{evaluate_split, train_joint, TrainConfig};

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    /// Epochs per short training run.
    pub epochs: usize,
    pub seed: u64,
    /// Run the per-tag fine-tuning phase after the grid.
    pub phase2: bool,
    /// Candidate per-tag weights tried in phase 2.
    pub neighborhood: Vec<f64>,
    /// Maximum allowed drop in any other task's dev metric.
    pub tolerance: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            epochs: 20,
            seed: 0,
            phase2: true,
            neighborhood: vec![0.8, 0.9, 0.95, 1.0],
            tolerance: 0.005,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub lambda: f64,
    pub lambda_l: f64,
    pub dev_bleu: f64,
    pub dev_lemma_exact: f64,
    pub dev_tag_f1: [f64; 6],
}

#[derive(Debug, Clone)]
pub struct Phase2Adjustment {
    pub tag: Tag,
    pub weight: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub grid: Vec<GridRow>,
    pub chosen_lambda: f64,
    pub chosen: LossWeights,
    pub adjustments: Vec<Phase2Adjustment>,
}

impl CalibrationResult {
    /// The 11-row grid as CSV.
    pub fn grid_csv(&self) -> String {
        let mut out = String::from(
            "lambda,lambda_l,dev_bleu,dev_lemma_exact,f1_pos,f1_g,f1_n,f1_p,f1_c,f1_tam\n",
        );
        for r in &self.grid {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.lambda,
                r.lambda_l,
                r.dev_bleu,
                r.dev_lemma_exact,
                r.dev_tag_f1[0],
                r.dev_tag_f1[1],
                r.dev_tag_f1[2],
                r.dev_tag_f1[3],
                r.dev_tag_f1[4],
                r.dev_tag_f1[5],
            ));
        }
        out
    }

    /// The chosen weights as a config-file snippet `train` can consume.
    pub fn chosen_manifest(&self) -> String {
        let w = &self.chosen;
        format!(
            "# calibrated loss weights (chosen lambda = {})\n[loss]\nlambda_pos = {}\n\
             lambda_g = {}\nlambda_n = {}\nlambda_p = {}\nlambda_c = {}\nlambda_tam = {}\n\
             lambda_l = {}\n",
            self.chosen_lambda, w.pos, w.gender, w.number, w.person, w.case, w.tam, w.lemma
        )
    }
}

struct RunMetrics {
    bleu: f64,
    lemma_exact: f64,
    tag_f1: [f64; 6],
}

fn short_run(
    corpus: &EncodedCorpus,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    cal: &CalibrationConfig,
    weights: &LossWeights,
) -> Result<RunMetrics> {
    let pool = FeaturePool::standard();
    let masks = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
    let mut model = Model::new(
        model_cfg.clone(),
        corpus.vocab.clone(),
        corpus.domains.clone(),
        masks,
        cal.seed,
    )?;
    let cfg = TrainConfig {
        max_epochs: cal.epochs,
        freeze: false,
        target_train_loss: 0.0,
        eval_every: cal.epochs.max(1),
        seed: cal.seed,
        ..train_cfg.clone()
    };
    train_joint(corpus, &mut model, weights, &cfg)?;
    let split = if corpus.dev.is_empty() {
        &corpus.train
    } else {
        &corpus.dev
    };
    let dev = evaluate_split(&model, split, true, model.config.beam_width)?;
    Ok(RunMetrics {
        bleu: dev.bleu.expect("decode requested"),
        lemma_exact: dev.lemma_exact.expect("decode requested"),
        tag_f1: dev.tag_acc,
    })
}

/// No other task may drop by more than the tolerance; the adjusted tag
/// must actually improve.
fn acceptable(
    current: &RunMetrics,
    candidate: &RunMetrics,
    adjusted: Tag,
    tolerance: f64,
) -> bool {
    if candidate.tag_f1[adjusted.index()] <= current.tag_f1[adjusted.index()] {
        return false;
    }
    for tag in Tag::ALL {
        if tag != adjusted && candidate.tag_f1[tag.index()] < current.tag_f1[tag.index()] - tolerance
        {
            return false;
        }
    }
    candidate.bleu >= current.bleu - tolerance * 100.0
}

/// Phase 1: 11 grid points `lambda = 0.0, 0.1, ..., 1.0` with
/// `lambda_l = 1 - lambda`, scored by dev BLEU. Phase 2: fine-tune the
/// weights of tags that peaked at a different grid point.
pub fn calibrate_lambdas(
    corpus: &EncodedCorpus,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    cal: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let mut grid = Vec::with_capacity(11);
    for i in 0..=10u32 {
        let lambda = f64::from(i) / 10.0;
        let weights = LossWeights::heuristic(lambda)?;
        let m = short_run(corpus, model_cfg, train_cfg, cal, &weights)?;
        grid.push(GridRow {
            lambda,
            lambda_l: 1.0 - lambda,
            dev_bleu: m.bleu,
            dev_lemma_exact: m.lemma_exact,
            dev_tag_f1: m.tag_f1,
        });
    }

    // Best dev BLEU wins; ties go to the larger lambda (better tags for
    // equal lemma quality).
    let mut chosen_idx = 0;
    for (i, row) in grid.iter().enumerate() {
        if row.dev_bleu >= grid[chosen_idx].dev_bleu {
            chosen_idx = i;
        }
    }
    let chosen_lambda = grid[chosen_idx].lambda;
    let mut chosen = LossWeights::heuristic(chosen_lambda)?;
    let mut current = RunMetrics {
        bleu: grid[chosen_idx].dev_bleu,
        lemma_exact: grid[chosen_idx].dev_lemma_exact,
        tag_f1: grid[chosen_idx].dev_tag_f1,
    };

    let mut adjustments = Vec::new();
    if cal.phase2 {
        for tag in Tag::ALL {
            let best_over_grid = grid
                .iter()
                .map(|r| r.dev_tag_f1[tag.index()])
                .fold(f64::NEG_INFINITY, f64::max);
            let suboptimal =
                best_over_grid > current.tag_f1[tag.index()] + cal.tolerance;
            if !suboptimal {
                continue;
            }
            for &w in &cal.neighborhood {
                if (w - chosen.tag(tag)).abs() < 1e-12 {
                    continue;
                }
                let mut candidate_weights = chosen;
                candidate_weights.set_tag(tag, w);
                let candidate = short_run(corpus, model_cfg, train_cfg, cal, &candidate_weights)?;
                let ok = acceptable(&current, &candidate, tag, cal.tolerance);
                adjustments.push(Phase2Adjustment {
                    tag,
                    weight: w,
                    accepted: ok,
                });
                if ok {
                    chosen = candidate_weights;
                    current = candidate;
                }
            }
        }
    }

    Ok(CalibrationResult {
        grid,
        chosen_lambda,
        chosen,
        adjustments,
    })
}
