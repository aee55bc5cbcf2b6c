//! Joint multi-task training with progressive freezing.

use crate::autodiff::{Tape, Tensor};
use crate::corpus::Tag;
use crate::dataset::{DataItem, EncodedCorpus};
use crate::error::{Error, Result};
use crate::eval::char_bleu;
use crate::layers::{task_losses, weighted_total, ExamplePrediction, ExampleTarget, LossWeights};
use crate::model::Model;
use crate::train::adadelta::{adadelta_update, AdadeltaParams, AdadeltaSlot};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one optimizer this trainer implements; kept as an enum so
/// checkpoints and configs state it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adadelta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev-loss improvement greater than `min_delta`
    /// before the tag predictor freezes (and later the lemma run stops).
    pub patience: usize,
    pub min_delta: f64,
    /// Global gradient-norm clamp; 0 disables it.
    pub grad_clip: f64,
    pub seed: u64,
    /// Progressive freezing on/off.
    pub freeze: bool,
    /// Stop once the epoch's mean train loss drops below this; 0 disables.
    pub target_train_loss: f64,
    /// Compute decode-based dev metrics (lemma exact match, BLEU) only
    /// every this many epochs; loss and tag metrics are always computed.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adadelta,
            lr: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
            batch_size: 32,
            max_epochs: 200,
            patience: 5,
            min_delta: 1e-4,
            grad_clip: 0.0,
            seed: 0,
            freeze: true,
            target_train_loss: 0.0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must be in [0, 1)"));
        }
        if self.patience < 1 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.batch_size < 1 || self.max_epochs < 1 || self.eval_every < 1 {
            return Err(Error::invalid(
                "batch_size, max_epochs and eval_every must be at least 1",
            ));
        }
        Ok(())
    }

    fn adadelta(&self) -> AdadeltaParams {
        AdadeltaParams {
            lr: self.lr,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

/// Which parameter groups are frozen. Frozen parameters register as tape
/// constants and are skipped by the optimizer, so they stay bit-identical.
#[derive(Debug, Clone, Default)]
pub struct FreezeState {
    frozen_prefixes: Vec<&'static str>,
    pub tag_frozen_at: Option<usize>,
}

impl FreezeState {
    pub fn new() -> FreezeState {
        FreezeState::default()
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen_prefixes.iter().any(|p| name.starts_with(p))
    }

    /// Freeze the tag predictor and the shared embedding table.
    pub fn freeze_tag_predictor(&mut self, epoch: usize) {
        if self.tag_frozen_at.is_none() {
            self.frozen_prefixes.push("tag.");
            self.frozen_prefixes.push("embed.");
            self.tag_frozen_at = Some(epoch);
        }
    }

    pub fn tag_frozen(&self) -> bool {
        self.tag_frozen_at.is_some()
    }
}

/// Gradients of one batch, aligned with the model's parameter order.
pub struct BatchGradients {
    pub loss: f64,
    /// Unweighted per-task mean cross-entropies (POS..TAM, lemma).
    pub task_losses: [f64; 7],
    pub grads: Vec<Option<Tensor>>,
}

/// Forward + backward over one batch. `training` gates dropout/noise.
/// Frozen parameters (per `freeze`) receive no gradient entry.
pub fn batch_gradients(
    model: &Model,
    items: &[&DataItem],
    weights: &LossWeights,
    freeze: &FreezeState,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<BatchGradients> {
    let mut tape = Tape::new();
    let vars = model.register_params(&mut tape, |name| !freeze.is_frozen(name));
    let mut predictions = Vec::with_capacity(items.len());
    let mut targets = Vec::with_capacity(items.len());
    for item in items {
        let tag_probs = model.tag_forward(
            &mut tape,
            &vars,
            &item.example,
            &item.features,
            training,
            rng,
        )?;
        let lemma = model.lemma_forward_teacher(&mut tape, &vars, &item.example)?;
        predictions.push(ExamplePrediction {
            tag_probs,
            lemma_step_probs: lemma.step_probs,
        });
        targets.push(ExampleTarget {
            tags: *item.example.gold_tags.ids(),
            lemma_symbols: lemma.targets,
        });
    }
    let tasks = task_losses(&mut tape, &predictions, &targets)?;
    let task_values: [f64; 7] = std::array::from_fn(|i| tape.value(tasks[i]).item());
    for (i, v) in task_values.iter().enumerate() {
        if !v.is_finite() {
            let head = if i < 6 { Tag::ALL[i].name() } else { "lemma" };
            return Err(Error::NonFiniteLoss {
                head: head.to_string(),
                epoch: 0,
            });
        }
    }
    let total = weighted_total(&mut tape, &tasks, weights)?;
    let loss = tape.value(total).item();
    let grads_by_var = tape.backward(total)?;
    let grads = vars
        .iter()
        .map(|&v| grads_by_var.get(v).cloned())
        .collect();
    Ok(BatchGradients {
        loss,
        task_losses: task_values,
        grads,
    })
}

/// Dev-set measurements for one epoch.
#[derive(Debug, Clone)]
pub struct DevEval {
    pub task_loss: [f64; 7],
    pub tag_acc: [f64; 6],
    pub lemma_exact: Option<f64>,
    pub bleu: Option<f64>,
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

/// Evaluate teacher-forced losses and tag accuracies over a split;
/// decode-based lemma metrics only when `decode` is set.
pub fn evaluate_split(
    model: &Model,
    split: &[Vec<DataItem>],
    decode: bool,
    beam_width: usize,
) -> Result<DevEval> {
    let items: Vec<&DataItem> = split.iter().flatten().collect();
    if items.is_empty() {
        return Err(Error::invalid("evaluate_split: empty split"));
    }
    let freeze = FreezeState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut task_loss = [0.0f64; 7];
    let mut tag_correct = [0usize; 6];
    let mut n_batches = 0usize;
    for chunk in items.chunks(64) {
        let mut tape = Tape::new();
        let vars = model.register_params(&mut tape, |_| false);
        let mut predictions = Vec::with_capacity(chunk.len());
        let mut targets = Vec::with_capacity(chunk.len());
        for item in chunk {
            let tag_probs = model.tag_forward(
                &mut tape,
                &vars,
                &item.example,
                &item.features,
                false,
                &mut rng,
            )?;
            for tag in Tag::ALL {
                let pred = argmax(tape.value(tag_probs[tag.index()]).data());
                if pred == item.example.gold_tags.get(tag) {
                    tag_correct[tag.index()] += 1;
                }
            }
            let lemma = model.lemma_forward_teacher(&mut tape, &vars, &item.example)?;
            predictions.push(ExamplePrediction {
                tag_probs,
                lemma_step_probs: lemma.step_probs,
            });
            targets.push(ExampleTarget {
                tags: *item.example.gold_tags.ids(),
                lemma_symbols: lemma.targets,
            });
        }
        let tasks = task_losses(&mut tape, &predictions, &targets)?;
        let batch_weight = chunk.len() as f64 / items.len() as f64;
        for i in 0..7 {
            task_loss[i] += tape.value(tasks[i]).item() * batch_weight;
        }
        n_batches += 1;
    }
    let _ = (n_batches, &freeze);
    let tag_acc: [f64; 6] = std::array::from_fn(|i| tag_correct[i] as f64 / items.len() as f64);

    let (lemma_exact, bleu) = if decode {
        let mut pred_lemmas = Vec::with_capacity(items.len());
        let mut gold_lemmas = Vec::with_capacity(items.len());
        let mut exact = 0usize;
        for item in &items {
            let decoded = model.decode_lemma_string(&item.example.word_ids, beam_width)?;
            if decoded == item.lemma {
                exact += 1;
            }
            pred_lemmas.push(decoded);
            gold_lemmas.push(item.lemma.clone());
        }
        (
            Some(exact as f64 / items.len() as f64),
            Some(char_bleu(&pred_lemmas, &gold_lemmas, 4)?),
        )
    } else {
        (None, None)
    };
    Ok(DevEval {
        task_loss,
        tag_acc,
        lemma_exact,
        bleu,
    })
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_task_loss: [f64; 7],
    pub dev_tag_f1: [f64; 6],
    pub dev_lemma_exact: Option<f64>,
    pub dev_bleu: Option<f64>,
    pub tag_frozen: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub freeze_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// Per-epoch CSV: losses, per-task dev micro-F1 (accuracy), dev BLEU,
    /// and the freeze flag.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_loss,dev_loss_pos,dev_loss_g,dev_loss_n,dev_loss_p,dev_loss_c,\
             dev_loss_tam,dev_loss_lemma,dev_f1_pos,dev_f1_g,dev_f1_n,dev_f1_p,dev_f1_c,\
             dev_f1_tam,dev_lemma_exact,dev_bleu,tag_frozen\n",
        );
        for e in &self.epochs {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                e.dev_task_loss[0],
                e.dev_task_loss[1],
                e.dev_task_loss[2],
                e.dev_task_loss[3],
                e.dev_task_loss[4],
                e.dev_task_loss[5],
                e.dev_task_loss[6],
                e.dev_tag_f1[0],
                e.dev_tag_f1[1],
                e.dev_tag_f1[2],
                e.dev_tag_f1[3],
                e.dev_tag_f1[4],
                e.dev_tag_f1[5],
                opt(e.dev_lemma_exact),
                opt(e.dev_bleu),
                e.tag_frozen,
            ));
        }
        out
    }
}

/// Train the model in place. Deterministic for a fixed seed. When the
/// corpus has no dev split, dev metrics fall back to the train split.
pub fn train_joint(
    corpus: &EncodedCorpus,
    model: &mut Model,
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_joint_with_hook(corpus, model, weights, cfg, |_, _| {})
}

/// [`train_joint`] with a per-epoch observer called after the optimizer
/// ran and dev metrics were recorded; used by tests and experiment
/// harnesses that inspect the model mid-run.
pub fn train_joint_with_hook(
    corpus: &EncodedCorpus,
    model: &mut Model,
    weights: &LossWeights,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&Model, &EpochStats),
) -> Result<TrainHistory> {
    cfg.validate()?;
    weights.validate()?;
    let train_items: Vec<(usize, usize)> = corpus
        .train
        .iter()
        .enumerate()
        .flat_map(|(si, sent)| (0..sent.len()).map(move |ti| (si, ti)))
        .collect();
    if train_items.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let dev_split: &[Vec<DataItem>] = if corpus.dev.is_empty() {
        &corpus.train
    } else {
        &corpus.dev
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hp = cfg.adadelta();
    let mut slots: Vec<AdadeltaSlot> = model
        .params()
        .iter()
        .map(|(_, t)| AdadeltaSlot::new(t.shape()))
        .collect();
    let mut freeze = FreezeState::new();
    let mut history = TrainHistory::default();

    let mut best_tag_loss = f64::INFINITY;
    let mut tag_stall = 0usize;
    let mut best_lemma_loss = f64::INFINITY;
    let mut lemma_stall = 0usize;

    let mut order = train_items;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&DataItem> = chunk
                .iter()
                .map(|&(si, ti)| &corpus.train[si][ti])
                .collect();
            let bg = batch_gradients(model, &items, weights, &freeze, &mut rng, true)
                .map_err(|e| match e {
                    Error::NonFiniteLoss { head, .. } => Error::NonFiniteLoss { head, epoch },
                    other => other,
                })?;
            loss_sum += bg.loss;
            n_batches += 1;

            // Optional global-norm clamp, then Adadelta on every live param.
            let mut scale = 1.0;
            if cfg.grad_clip > 0.0 {
                let norm_sq: f64 = bg
                    .grads
                    .iter()
                    .flatten()
                    .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
                    .sum();
                let norm = norm_sq.sqrt();
                if norm > cfg.grad_clip {
                    scale = cfg.grad_clip / norm;
                }
            }
            for (idx, grad) in bg.grads.iter().enumerate() {
                let Some(grad) = grad else { continue };
                let id = crate::model::ParamId(idx);
                let grad = if scale != 1.0 {
                    grad.map(|v| v * scale)
                } else {
                    grad.clone()
                };
                adadelta_update(
                    model.params_mut().get_mut(id),
                    &grad,
                    &mut slots[idx],
                    &hp,
                );
            }
        }
        let train_loss = loss_sum / n_batches as f64;

        let decode = epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs;
        let dev = evaluate_split(model, dev_split, decode, model.config.beam_width)?;
        let stats = EpochStats {
            epoch,
            train_loss,
            dev_task_loss: dev.task_loss,
            dev_tag_f1: dev.tag_acc,
            dev_lemma_exact: dev.lemma_exact,
            dev_bleu: dev.bleu,
            tag_frozen: freeze.tag_frozen(),
        };
        on_epoch(model, &stats);
        history.epochs.push(stats);

        if cfg.freeze {
            if !freeze.tag_frozen() {
                let tag_loss: f64 = dev.task_loss[..6].iter().sum();
                if best_tag_loss - tag_loss > cfg.min_delta {
                    best_tag_loss = tag_loss;
                    tag_stall = 0;
                } else {
                    tag_stall += 1;
                }
                if tag_stall >= cfg.patience {
                    freeze.freeze_tag_predictor(epoch);
                    history.freeze_epoch = Some(epoch);
                }
            } else {
                let lemma_loss = dev.task_loss[6];
                if best_lemma_loss - lemma_loss > cfg.min_delta {
                    best_lemma_loss = lemma_loss;
                    lemma_stall = 0;
                } else {
                    lemma_stall += 1;
                }
                if lemma_stall >= cfg.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
        if cfg.target_train_loss > 0.0 && train_loss < cfg.target_train_loss {
            history.stopped_early = true;
            break;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy_encoded_corpus;
    use crate::lingfeat::{FeatureMask, FeaturePool};
    use crate::model::ModelConfig;

    pub(crate) fn toy_model(corpus: &EncodedCorpus, seed: u64) -> Model {
        let pool = FeaturePool::standard();
        let masks = std::array::from_fn(|_| FeatureMask::all_ones(pool.len()));
        Model::new(
            ModelConfig::toy(),
            corpus.vocab.clone(),
            corpus.domains.clone(),
            masks,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn short_training_runs_and_is_deterministic() {
        let corpus = toy_encoded_corpus(1, 8).unwrap();
        let cfg = TrainConfig {
            max_epochs: 2,
            batch_size: 16,
            freeze: false,
            eval_every: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        let weights = LossWeights::calibrated();
        let run = || {
            let mut model = toy_model(&corpus, 5);
            let h = train_joint(&corpus, &mut model, &weights, &cfg).unwrap();
            (
                h.epochs.last().unwrap().train_loss,
                h.epochs.last().unwrap().dev_task_loss,
            )
        };
        let (l1, d1) = run();
        let (l2, d2) = run();
        assert_eq!(l1, l2, "same seed, same final loss");
        assert_eq!(d1, d2);
        assert!(l1.is_finite());
    }

    #[test]
    fn loss_decreases_on_toy_corpus() {
        let corpus = toy_encoded_corpus(1, 8).unwrap();
        let mut model = toy_model(&corpus, 6);
        let cfg = TrainConfig {
            max_epochs: 8,
            batch_size: 16,
            freeze: false,
            eval_every: 8,
            seed: 4,
            ..TrainConfig::default()
        };
        let h = train_joint(&corpus, &mut model, &LossWeights::calibrated(), &cfg).unwrap();
        let first = h.epochs.first().unwrap().train_loss;
        let last = h.epochs.last().unwrap().train_loss;
        assert!(
            last < first * 0.8,
            "training should reduce loss: {first} -> {last}"
        );
    }

    #[test]
    fn zero_lemma_weight_zeroes_lemma_gradients() {
        let corpus = toy_encoded_corpus(1, 8).unwrap();
        let model = toy_model(&corpus, 7);
        let items: Vec<&DataItem> = corpus.train[0].iter().collect();
        let weights = LossWeights::uniform(1.0, 0.0);
        let freeze = FreezeState::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bg = batch_gradients(&model, &items, &weights, &freeze, &mut rng, true).unwrap();
        for (idx, (name, _)) in model.params().iter().enumerate() {
            if name.starts_with("lemma.") {
                let norm = bg.grads[idx].as_ref().map(|g| g.norm()).unwrap_or(0.0);
                assert_eq!(norm, 0.0, "{name} must have exactly zero gradient");
            }
        }
        // and the embedding still gets tag-side gradient
        let emb_idx = model.params().find("embed.table").unwrap().0;
        assert!(bg.grads[emb_idx].as_ref().unwrap().norm() > 0.0);
    }

    #[test]
    fn csv_has_one_row_per_epoch() {
        let corpus = toy_encoded_corpus(1, 8).unwrap();
        let mut model = toy_model(&corpus, 8);
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 32,
            freeze: false,
            eval_every: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let h = train_joint(&corpus, &mut model, &LossWeights::calibrated(), &cfg).unwrap();
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3);
        assert!(csv.lines().next().unwrap().starts_with("epoch,"));
    }
}
