//! Central-difference verification of tape gradients.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compare the tape's analytic gradients against central differences.
///
/// `build` must construct the same scalar function of the given leaves on
/// any tape it is handed. Returns the maximum over all parameter
/// coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(params: &[Tensor], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::invalid("grad_check: eps must be positive"));
    }
    let eval = |params: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = build(&mut tape, &vars)?;
        let v = tape.value(out);
        if !v.is_scalar() {
            return Err(Error::invalid(format!(
                "grad_check: function output must be scalar, got shape {:?}",
                v.shape()
            )));
        }
        let val = v.item();
        if !val.is_finite() {
            return Err(Error::invalid("grad_check: non-finite function value"));
        }
        Ok(val)
    };

    // Analytic gradients from one taped pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut scratch: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        let analytic = grads
            .get(vars[pi])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(param.shape()));
        for ci in 0..param.len() {
            let orig = param.data()[ci];
            scratch[pi].data_mut()[ci] = orig + eps;
            let fp = eval(&scratch)?;
            scratch[pi].data_mut()[ci] = orig - eps;
            let fm = eval(&scratch)?;
            scratch[pi].data_mut()[ci] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.data()[ci];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
