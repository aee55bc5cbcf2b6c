//! Bilinear (general-form) attention with a learned scale on the energy
//! term: score(h_t, h_s) = scale * h_t' W_a h_s.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Stack rank-1 vectors as the columns of a matrix.
pub fn stack_columns(tape: &mut Tape, vars: &[Var]) -> Result<Var> {
    if vars.is_empty() {
        return Err(Error::invalid("stack_columns: no vectors"));
    }
    let mut cols = Vec::with_capacity(vars.len());
    for &v in vars {
        let n = tape.value(v).len();
        cols.push(tape.reshape(v, vec![n, 1])?);
    }
    tape.concat(&cols, 1)
}

/// Attend over encoder states from one decoder state.
///
/// `w_a` has shape `[decoder_hidden, encoder_hidden]`; `scale` is a scalar
/// variable multiplying every score. Returns the context vector (weighted
/// sum of encoder states) and the alignment weights.
pub fn luong_attention(
    tape: &mut Tape,
    decoder_state: Var,
    encoder_states: &[Var],
    w_a: Var,
    scale: Var,
) -> Result<(Var, Var)> {
    if encoder_states.is_empty() {
        return Err(Error::invalid("attention: no encoder states"));
    }
    let enc = stack_columns(tape, encoder_states)?;
    // u = h_t' W_a, scores_s = u . h_s
    let u = tape.matmul(decoder_state, w_a)?;
    let scores = tape.matmul(u, enc)?;
    let scores = tape.scale_by_var(scores, scale)?;
    let weights = tape.softmax(scores, 0)?;
    let context = tape.matmul(enc, weights)?;
    Ok((context, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_encoder_state_gets_weight_one() {
        let mut tape = Tape::new();
        let h_t = tape.constant(Tensor::vector(vec![0.3, -0.4]));
        let h_s = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let w_a = tape.constant(Tensor::randn(&[2, 3], 0.5, &mut ChaCha8Rng::seed_from_u64(1)));
        let scale = tape.constant(Tensor::scalar(1.0));
        let (ctx, w) = luong_attention(&mut tape, h_t, &[h_s], w_a, scale).unwrap();
        assert_eq!(tape.value(w).data(), &[1.0]);
        assert_eq!(tape.value(ctx).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_bilinear_matrix_gives_uniform_weights_and_mean_context() {
        let mut tape = Tape::new();
        let h_t = tape.constant(Tensor::vector(vec![0.3, -0.4]));
        let s1 = tape.constant(Tensor::vector(vec![2.0, 0.0]));
        let s2 = tape.constant(Tensor::vector(vec![0.0, 4.0]));
        let w_a = tape.constant(Tensor::zeros(&[2, 2]));
        let scale = tape.constant(Tensor::scalar(3.0));
        let (ctx, w) = luong_attention(&mut tape, h_t, &[s1, s2], w_a, scale).unwrap();
        assert_eq!(tape.value(w).data(), &[0.5, 0.5]);
        assert_eq!(tape.value(ctx).data(), &[1.0, 2.0]);
    }

    #[test]
    fn identity_bilinear_matches_softmax_of_dot_products() {
        let mut tape = Tape::new();
        let h_t = tape.constant(Tensor::vector(vec![1.0, 0.5]));
        let s1 = tape.constant(Tensor::vector(vec![0.2, -1.0]));
        let s2 = tape.constant(Tensor::vector(vec![0.7, 0.3]));
        let w_a = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let scale = tape.constant(Tensor::scalar(1.0));
        let (_, w) = luong_attention(&mut tape, h_t, &[s1, s2], w_a, scale).unwrap();
        // dot products: 1.0*0.2 + 0.5*(-1.0) = -0.3 ; 1.0*0.7 + 0.5*0.3 = 0.85
        let (d1, d2) = (-0.3f64, 0.85f64);
        let z = d1.exp() + d2.exp();
        let got = tape.value(w).data();
        assert!((got[0] - d1.exp() / z).abs() < 1e-12);
        assert!((got[1] - d2.exp() / z).abs() < 1e-12);
    }

    #[test]
    fn grad_check_through_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = vec![
            Tensor::randn(&[3], 0.6, &mut rng),    // decoder state
            Tensor::randn(&[3, 4], 0.6, &mut rng), // w_a
            Tensor::scalar(0.8),                   // scale
            Tensor::randn(&[4], 0.6, &mut rng),    // enc 1
            Tensor::randn(&[4], 0.6, &mut rng),    // enc 2
            Tensor::randn(&[4], 0.6, &mut rng),    // enc 3
        ];
        let err = grad_check(&params, 1e-5, |t, v| {
            let (ctx, w) = luong_attention(t, v[0], &v[3..6], v[1], v[2])?;
            let c2 = t.mul(ctx, ctx)?;
            let s1 = t.sum_all(c2);
            let w2 = t.mul(w, w)?;
            let s2 = t.sum_all(w2);
            let m = t.mul(s1, s2)?;
            Ok(t.sum_all(m))
        })
        .unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }
}
