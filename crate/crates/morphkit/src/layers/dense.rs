//! Per-tag classification head: the BiGRU output concatenated with the
//! tag's selected linguistic features, through a ReLU dense layer, a tanh
//! dense layer, and a softmax classifier, with dropout between stages.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use rand::Rng;

/// Tape handles for one head: `w1/b1` (ReLU stage), `w2/b2` (tanh stage),
/// `w3/b3` (softmax classifier over the tag's classes).
#[derive(Debug, Clone, Copy)]
pub struct DenseHeadVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
}

/// Probability vector over the head's classes.
///
/// `features` may be empty (an all-zero feature mask); the head then
/// consumes the shared representation alone.
pub fn dense_head<R: Rng>(
    tape: &mut Tape,
    shared: Var,
    features: Var,
    head: &DenseHeadVars,
    dropout_rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let n_classes = tape.value(head.w3).rows();
    if n_classes < 2 {
        return Err(Error::invalid(format!(
            "dense head needs at least 2 classes, got {n_classes}"
        )));
    }
    let x = tape.concat(&[shared, features], 0)?;
    let h1_pre = tape.matmul(head.w1, x)?;
    let h1_pre = tape.add(h1_pre, head.b1)?;
    let h1 = tape.relu(h1_pre);
    let h1 = super::dropout(tape, h1, dropout_rate, training, rng)?;
    let h2_pre = tape.matmul(head.w2, h1)?;
    let h2_pre = tape.add(h2_pre, head.b2)?;
    let h2 = tape.tanh(h2_pre);
    let h2 = super::dropout(tape, h2, dropout_rate, training, rng)?;
    let logits = tape.matmul(head.w3, h2)?;
    let logits = tape.add(logits, head.b3)?;
    tape.softmax(logits, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head_tensors(input: usize, d1: usize, d2: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        vec![
            Tensor::randn(&[d1, input], 0.4, rng),
            Tensor::randn(&[d1], 0.4, rng),
            Tensor::randn(&[d2, d1], 0.4, rng),
            Tensor::randn(&[d2], 0.4, rng),
            Tensor::randn(&[classes, d2], 0.4, rng),
            Tensor::randn(&[classes], 0.4, rng),
        ]
    }

    fn head_from(vars: &[Var]) -> DenseHeadVars {
        DenseHeadVars {
            w1: vars[0],
            b1: vars[1],
            w2: vars[2],
            b2: vars[3],
            w3: vars[4],
            b3: vars[5],
        }
    }

    #[test]
    fn output_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let vars: Vec<Var> = head_tensors(7, 4, 5, 3, &mut rng)
            .into_iter()
            .map(|t| tape.leaf(t))
            .collect();
        let head = head_from(&vars);
        let shared = tape.constant(Tensor::randn(&[5], 0.8, &mut rng));
        let feats = tape.constant(Tensor::randn(&[2], 0.8, &mut rng));
        let p = dense_head(&mut tape, shared, feats, &head, 0.0, false, &mut rng).unwrap();
        let v = tape.value(p);
        assert_eq!(v.len(), 3);
        assert!((v.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(v.data().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let zeros = [
            Tensor::zeros(&[4, 6]),
            Tensor::zeros(&[4]),
            Tensor::zeros(&[5, 4]),
            Tensor::zeros(&[5]),
            Tensor::zeros(&[4, 5]),
            Tensor::zeros(&[4]),
        ];
        let vars: Vec<Var> = zeros.into_iter().map(|t| tape.constant(t)).collect();
        let head = head_from(&vars);
        let shared = tape.constant(Tensor::randn(&[6], 1.0, &mut rng));
        let feats = tape.constant(Tensor::vector(vec![]));
        let p = dense_head(&mut tape, shared, feats, &head, 0.0, false, &mut rng).unwrap();
        for &v in tape.value(p).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_single_class_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::new();
        let tensors = [
            Tensor::zeros(&[4, 6]),
            Tensor::zeros(&[4]),
            Tensor::zeros(&[5, 4]),
            Tensor::zeros(&[5]),
            Tensor::zeros(&[1, 5]),
            Tensor::zeros(&[1]),
        ];
        let vars: Vec<Var> = tensors.into_iter().map(|t| tape.constant(t)).collect();
        let head = head_from(&vars);
        let shared = tape.constant(Tensor::zeros(&[6]));
        let feats = tape.constant(Tensor::vector(vec![]));
        assert!(dense_head(&mut tape, shared, feats, &head, 0.0, false, &mut rng).is_err());
    }

    #[test]
    fn grad_check_through_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params = head_tensors(6, 4, 5, 3, &mut rng);
        params.push(Tensor::randn(&[4], 0.8, &mut rng)); // shared
        params.push(Tensor::randn(&[2], 0.8, &mut rng)); // features
        let err = grad_check(&params, 1e-5, |t, v| {
            let head = head_from(&v[..6]);
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let p = dense_head(t, v[6], v[7], &head, 0.0, false, &mut r)?;
            let sq = t.mul(p, p)?;
            Ok(t.sum_all(sq))
        })
        .unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn argmax_invariant_to_positive_input_rescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tape = Tape::new();
        let vars: Vec<Var> = head_tensors(6, 4, 5, 4, &mut rng)
            .into_iter()
            .map(|t| tape.leaf(t))
            .collect();
        let head = head_from(&vars);
        // Rescaling the softmax *logits* input positively preserves argmax:
        // check on the classifier stage in isolation.
        let h2 = Tensor::randn(&[5], 1.0, &mut rng);
        let mut argmaxes = Vec::new();
        for scale in [1.0, 2.5, 10.0] {
            let h2v = tape.constant(h2.map(|v| v * scale));
            let logits = tape.matmul(head.w3, h2v).unwrap();
            let p = tape.softmax(logits, 0).unwrap();
            let vals = tape.value(p).data();
            let argmax = vals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            argmaxes.push(argmax);
        }
        assert!(argmaxes.windows(2).all(|w| w[0] == w[1]));
    }
}
