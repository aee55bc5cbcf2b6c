//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Everything the model needs and nothing more: rank-0/1/2 `f64` tensors,
//! a closed set of primitives recorded on a [`Tape`], and a
//! central-difference [`grad_check`] to verify every backward rule.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn relu_definition() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_of_constant_vector_is_uniform() {
        for c in [-3.0, 0.0, 17.5] {
            let mut t = Tape::new();
            let x = t.constant(Tensor::vector(vec![c, c, c]));
            let y = t.softmax(x, 0).unwrap();
            for &v in t.value(y).data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_sums_to_one_and_positive() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, -2.0, 0.5, 9.0]));
        let y = t.softmax(x, 0).unwrap();
        let s: f64 = t.value(y).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(t.value(y).data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn matmul_ones() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::ones(&[2, 3]));
        let b = t.constant(Tensor::ones(&[3, 1]));
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).shape(), &[2, 1]);
        assert_eq!(t.value(c).data(), &[3.0, 3.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::ones(&[2, 3]));
        let b = t.constant(Tensor::ones(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "unexpected message: {err}");
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 2, vec![3.0, -1.0, 0.5, 2.0]).unwrap());
        let loss = t.sum_all(x);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_square_sum() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum_all(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = t.leaf(Tensor::vector(vec![5.0]));
        let loss = t.sum_all(x);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let mut t = Tape::new();
            let x = t.leaf(Tensor::vector(vec![0.3, -0.9, 1.7]));
            let w = t.leaf(Tensor::matrix(3, 3, (0..9).map(|i| i as f64 * 0.1 - 0.4).collect()).unwrap());
            let h = t.matmul(w, x).unwrap();
            let a = t.tanh(h);
            let loss = t.sum_all(a);
            let g = t.backward(loss).unwrap();
            (g.get(x).unwrap().data().to_vec(), g.get(w).unwrap().data().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let x = Tensor::vector(vec![0.7, -1.3, 2.2]);
        let err = grad_check(&[x], 1e-4, |t, vars| Ok(t.sum_all(vars[0]))).unwrap();
        assert!(err < 1e-10, "relative error {err}");
    }

    #[test]
    fn grad_check_tanh_of_matvec() {
        let mut r = rng(7);
        let w = Tensor::randn(&[4, 3], 0.5, &mut r);
        let x = Tensor::randn(&[3], 0.5, &mut r);
        let err = grad_check(&[w, x], 1e-4, |t, vars| {
            let h = t.matmul(vars[0], vars[1])?;
            let a = t.tanh(h);
            Ok(t.sum_all(a))
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    /// Every primitive passes a central-difference check on random inputs.
    #[test]
    fn grad_check_all_primitives() {
        let mut r = rng(11);
        let checks: Vec<(&str, f64)> = vec![
            ("add", {
                let a = Tensor::randn(&[3, 4], 0.8, &mut r);
                let b = Tensor::randn(&[3, 4], 0.8, &mut r);
                grad_check(&[a, b], 1e-5, |t, v| {
                    let s = t.add(v[0], v[1])?;
                    Ok(t.sum_all(s))
                })
                .unwrap()
            }),
            ("add_row_vec", {
                let a = Tensor::randn(&[3, 4], 0.8, &mut r);
                let b = Tensor::randn(&[4], 0.8, &mut r);
                grad_check(&[a, b], 1e-5, |t, v| {
                    let s = t.add(v[0], v[1])?;
                    let sq = t.mul(s, s)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("sub_mul", {
                let a = Tensor::randn(&[5], 0.8, &mut r);
                let b = Tensor::randn(&[5], 0.8, &mut r);
                grad_check(&[a, b], 1e-5, |t, v| {
                    let d = t.sub(v[0], v[1])?;
                    let m = t.mul(d, v[0])?;
                    Ok(t.sum_all(m))
                })
                .unwrap()
            }),
            ("scale_by_var", {
                let x = Tensor::randn(&[4], 0.8, &mut r);
                let s = Tensor::scalar(0.9);
                grad_check(&[x, s], 1e-5, |t, v| {
                    let y = t.scale_by_var(v[0], v[1])?;
                    let sq = t.mul(y, y)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("matmul", {
                let a = Tensor::randn(&[3, 4], 0.6, &mut r);
                let b = Tensor::randn(&[4, 2], 0.6, &mut r);
                grad_check(&[a, b], 1e-5, |t, v| {
                    let c = t.matmul(v[0], v[1])?;
                    let sq = t.mul(c, c)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("vecmat", {
                let x = Tensor::randn(&[3], 0.6, &mut r);
                let a = Tensor::randn(&[3, 5], 0.6, &mut r);
                grad_check(&[x, a], 1e-5, |t, v| {
                    let y = t.matmul(v[0], v[1])?;
                    let sq = t.mul(y, y)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("sigmoid_tanh_exp", {
                let x = Tensor::randn(&[6], 0.7, &mut r);
                grad_check(&[x], 1e-5, |t, v| {
                    let s = t.sigmoid(v[0]);
                    let h = t.tanh(s);
                    let e = t.exp(h);
                    Ok(t.sum_all(e))
                })
                .unwrap()
            }),
            ("relu", {
                // Keep inputs away from the kink at 0.
                let x = Tensor::vector(vec![0.8, -0.9, 1.4, -2.0, 0.3]);
                grad_check(&[x], 1e-5, |t, v| {
                    let y = t.relu(v[0]);
                    Ok(t.sum_all(y))
                })
                .unwrap()
            }),
            ("log", {
                let x = Tensor::vector(vec![0.5, 1.5, 2.5, 0.9]);
                grad_check(&[x], 1e-6, |t, v| {
                    let y = t.log(v[0]);
                    Ok(t.sum_all(y))
                })
                .unwrap()
            }),
            ("clamp_min", {
                let x = Tensor::vector(vec![0.5, 1.5, -0.4, 0.9]);
                grad_check(&[x], 1e-6, |t, v| {
                    let y = t.clamp_min(v[0], 1e-3);
                    let sq = t.mul(y, y)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("concat_slice", {
                let a = Tensor::randn(&[3], 0.8, &mut r);
                let b = Tensor::randn(&[4], 0.8, &mut r);
                grad_check(&[a, b], 1e-5, |t, v| {
                    let c = t.concat(&[v[0], v[1]], 0)?;
                    let s = t.slice(c, 0, 1, 5)?;
                    let sq = t.mul(s, s)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("concat_cols", {
                let a = Tensor::randn(&[3, 2], 0.8, &mut r);
                let b = Tensor::randn(&[3, 4], 0.8, &mut r);
                grad_check(&[a, b], 1e-5, |t, v| {
                    let c = t.concat(&[v[0], v[1]], 1)?;
                    let sq = t.mul(c, c)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("sum_mean_axis", {
                let a = Tensor::randn(&[3, 4], 0.8, &mut r);
                grad_check(&[a], 1e-5, |t, v| {
                    let s0 = t.sum_axis(v[0], 0)?;
                    let m1 = t.mean_axis(v[0], 1)?;
                    let s = t.sum_all(s0);
                    let m = t.sum_all(m1);
                    let sq = t.mul(s, m)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("max_axis", {
                let a = Tensor::matrix(2, 4, vec![0.3, 1.9, -0.5, 0.2, 2.0, 0.1, 0.4, -1.0])
                    .unwrap();
                grad_check(&[a], 1e-5, |t, v| {
                    let m = t.max_axis(v[0], 1)?;
                    let sq = t.mul(m, m)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("softmax", {
                let x = Tensor::randn(&[5], 1.0, &mut r);
                grad_check(&[x], 1e-5, |t, v| {
                    let s = t.softmax(v[0], 0)?;
                    let sq = t.mul(s, s)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("rows", {
                let table = Tensor::randn(&[5, 3], 0.8, &mut r);
                grad_check(&[table], 1e-5, |t, v| {
                    let picked = t.rows(v[0], &[1, 1, 4])?;
                    let sq = t.mul(picked, picked)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("transpose_reshape", {
                let a = Tensor::randn(&[3, 4], 0.8, &mut r);
                grad_check(&[a], 1e-5, |t, v| {
                    let tt = t.transpose(v[0])?;
                    let flat = t.reshape(tt, vec![12])?;
                    let sq = t.mul(flat, flat)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("conv1d", {
                let x = Tensor::randn(&[3, 7], 0.7, &mut r);
                let w = Tensor::randn(&[2, 6], 0.7, &mut r);
                let b = Tensor::randn(&[2], 0.7, &mut r);
                grad_check(&[x, w, b], 1e-5, |t, v| {
                    let c = t.conv1d(v[0], v[1], v[2], 2)?;
                    let sq = t.mul(c, c)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
            ("pool2", {
                let x = Tensor::matrix(2, 5, vec![1.0, 3.0, 2.0, 5.0, 9.0, -1.0, 0.5, 4.0, 4.5, 7.0])
                    .unwrap();
                grad_check(&[x], 1e-5, |t, v| {
                    let pm = t.pool2_max(v[0])?;
                    let pa = t.pool2_avg(v[0])?;
                    let s = t.add(pm, pa)?;
                    let sq = t.mul(s, s)?;
                    Ok(t.sum_all(sq))
                })
                .unwrap()
            }),
        ];
        for (name, err) in checks {
            assert!(err < 1e-5, "{name}: relative error {err}");
        }
    }

    #[test]
    fn max_pool_tie_routes_to_first_index() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(1, 4, vec![2.0, 2.0, 1.0, 5.0]).unwrap());
        let p = t.pool2_max(x).unwrap();
        let loss = t.sum_all(p);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates_additively() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![3.0]));
        let a = t.scale(x, 2.0);
        let b = t.scale(x, 5.0);
        let s = t.add(a, b).unwrap();
        let loss = t.sum_all(s);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[7.0]);
    }
}
