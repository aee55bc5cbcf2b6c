//! The weighted joint cross-entropy over the six tag heads and the
//! character-level lemma decoder.

use crate::autodiff::{Tape, Tensor, Var};
use crate::corpus::Tag;
use crate::error::{Error, Result};

/// Floor applied to predicted probabilities before the log, identically in
/// training and evaluation.
pub const LOG_EPS: f64 = 1e-12;

/// The seven loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pos: f64,
    pub gender: f64,
    pub number: f64,
    pub person: f64,
    pub case: f64,
    pub tam: f64,
    pub lemma: f64,
}

impl LossWeights {
    /// Calibrated operating point: shared tag weight 0.7 with lemma 0.3,
    /// then gender/person raised to 0.9 and case to 0.95.
    pub fn calibrated() -> LossWeights {
        LossWeights {
            pos: 0.7,
            gender: 0.9,
            number: 0.7,
            person: 0.9,
            case: 0.95,
            tam: 0.7,
            lemma: 0.3,
        }
    }

    /// Heuristic search mode: one shared tag weight, lemma weight its
    /// complement so the two sum to 1.
    pub fn heuristic(lambda: f64) -> Result<LossWeights> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!(
                "heuristic lambda must be in [0, 1], got {lambda}"
            )));
        }
        Ok(LossWeights {
            pos: lambda,
            gender: lambda,
            number: lambda,
            person: lambda,
            case: lambda,
            tam: lambda,
            lemma: 1.0 - lambda,
        })
    }

    pub fn uniform(tag: f64, lemma: f64) -> LossWeights {
        LossWeights {
            pos: tag,
            gender: tag,
            number: tag,
            person: tag,
            case: tag,
            tam: tag,
            lemma,
        }
    }

    /// Weights that train a single tag head in isolation.
    pub fn single_task_tag(tag: Tag, weight: f64) -> LossWeights {
        let mut w = LossWeights::uniform(0.0, 0.0);
        w.set_tag(tag, weight);
        w
    }

    /// Weights that train the lemma predictor in isolation.
    pub fn single_task_lemma(weight: f64) -> LossWeights {
        LossWeights::uniform(0.0, weight)
    }

    pub fn tag(&self, tag: Tag) -> f64 {
        match tag {
            Tag::Pos => self.pos,
            Tag::Gender => self.gender,
            Tag::Number => self.number,
            Tag::Person => self.person,
            Tag::Case => self.case,
            Tag::Tam => self.tam,
        }
    }

    pub fn set_tag(&mut self, tag: Tag, w: f64) {
        match tag {
            Tag::Pos => self.pos = w,
            Tag::Gender => self.gender = w,
            Tag::Number => self.number = w,
            Tag::Person => self.person = w,
            Tag::Case => self.case = w,
            Tag::Tam => self.tam = w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pos,
            self.gender,
            self.number,
            self.person,
            self.case,
            self.tam,
            self.lemma,
        ];
        if all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> LossWeights {
        LossWeights {
            pos: self.pos * factor,
            gender: self.gender * factor,
            number: self.number * factor,
            person: self.person * factor,
            case: self.case * factor,
            tam: self.tam * factor,
            lemma: self.lemma * factor,
        }
    }
}

/// Predicted distributions for one example: one probability vector per tag
/// head plus one per teacher-forced lemma step.
pub struct ExamplePrediction {
    pub tag_probs: [Var; 6],
    pub lemma_step_probs: Vec<Var>,
}

/// Gold targets aligned with [`ExamplePrediction`].
pub struct ExampleTarget {
    pub tags: [usize; 6],
    pub lemma_symbols: Vec<usize>,
}

/// log(max(p[target], eps)) of one probability vector.
pub fn log_prob_at(tape: &mut Tape, probs: Var, target: usize) -> Result<Var> {
    let n = tape.value(probs).len();
    if target >= n {
        return Err(Error::invalid(format!(
            "target id {target} out of range for distribution of size {n}"
        )));
    }
    let mut one_hot = Tensor::zeros(&[n]);
    one_hot.data_mut()[target] = 1.0;
    let one_hot = tape.constant(one_hot);
    let picked = tape.mul(probs, one_hot)?;
    let p = tape.sum_all(picked);
    let p = tape.clamp_min(p, LOG_EPS);
    Ok(tape.log(p))
}

/// The seven per-task mean cross-entropies of a batch, before weighting:
/// six tag terms `-1/N sum_i log p_i[y_i]` in tag order, then the lemma
/// term `-1/N sum_i mean_t log p_it[y_it]` (mean over target characters,
/// so the lemma weight is length-independent).
pub fn task_losses(
    tape: &mut Tape,
    predictions: &[ExamplePrediction],
    targets: &[ExampleTarget],
) -> Result<[Var; 7]> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape {
            op: "joint_loss",
            lhs: vec![predictions.len()],
            rhs: vec![targets.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::invalid("joint_loss: empty batch"));
    }
    let n = predictions.len() as f64;
    let mut out = Vec::with_capacity(7);

    for tag in Tag::ALL {
        let mut task_sum = tape.constant(Tensor::scalar(0.0));
        for (pred, tgt) in predictions.iter().zip(targets) {
            let lp = log_prob_at(tape, pred.tag_probs[tag.index()], tgt.tags[tag.index()])?;
            task_sum = tape.add(task_sum, lp)?;
        }
        out.push(tape.scale(task_sum, -1.0 / n));
    }

    let mut lemma_sum = tape.constant(Tensor::scalar(0.0));
    for (pred, tgt) in predictions.iter().zip(targets) {
        if pred.lemma_step_probs.len() != tgt.lemma_symbols.len() {
            return Err(Error::Shape {
                op: "joint_loss lemma steps",
                lhs: vec![pred.lemma_step_probs.len()],
                rhs: vec![tgt.lemma_symbols.len()],
            });
        }
        let steps = pred.lemma_step_probs.len().max(1) as f64;
        let mut ex_sum = tape.constant(Tensor::scalar(0.0));
        for (&probs, &sym) in pred.lemma_step_probs.iter().zip(&tgt.lemma_symbols) {
            let lp = log_prob_at(tape, probs, sym)?;
            ex_sum = tape.add(ex_sum, lp)?;
        }
        let ex_mean = tape.scale(ex_sum, 1.0 / steps);
        lemma_sum = tape.add(lemma_sum, ex_mean)?;
    }
    out.push(tape.scale(lemma_sum, -1.0 / n));
    Ok(out.try_into().expect("seven tasks"))
}

/// Combine per-task losses with their weights into one scalar.
pub fn weighted_total(tape: &mut Tape, tasks: &[Var; 7], weights: &LossWeights) -> Result<Var> {
    let mut total = tape.constant(Tensor::scalar(0.0));
    for tag in Tag::ALL {
        let weighted = tape.scale(tasks[tag.index()], weights.tag(tag));
        total = tape.add(total, weighted)?;
    }
    let lemma = tape.scale(tasks[6], weights.lemma);
    tape.add(total, lemma)
}

/// Weighted sum of per-task mean cross-entropies over a batch.
///
/// Tasks with zero weight still flow through the tape, which makes "zero
/// weight means exactly zero gradient" an identity of the arithmetic
/// rather than a control-flow special case.
pub fn joint_loss(
    tape: &mut Tape,
    predictions: &[ExamplePrediction],
    targets: &[ExampleTarget],
    weights: &LossWeights,
) -> Result<Var> {
    let tasks = task_losses(tape, predictions, targets)?;
    weighted_total(tape, &tasks, weights)
}
