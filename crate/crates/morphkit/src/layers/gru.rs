//! GRU cell and bidirectional wrapper.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Tape handles for one GRU cell's nine parameters. Weight shapes are
/// `[hidden, input]` for the `w_*` matrices and `[hidden, hidden]` for the
/// `u_*` matrices.
#[derive(Debug, Clone, Copy)]
pub struct GruCellVars {
    pub w_update: Var,
    pub u_update: Var,
    pub b_update: Var,
    pub w_reset: Var,
    pub u_reset: Var,
    pub b_reset: Var,
    pub w_cand: Var,
    pub u_cand: Var,
    pub b_cand: Var,
}

/// One step:
/// z = sigma(W_z x + U_z h + b_z), r = sigma(W_r x + U_r h + b_r),
/// cand = tanh(W_h x + U_h (r*h) + b_h), h' = (1-z)*h + z*cand.
pub fn gru_step(tape: &mut Tape, cell: &GruCellVars, x: Var, h_prev: Var) -> Result<Var> {
    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, h_in: Var| -> Result<Var> {
        let wx = tape.matmul(w, x)?;
        let uh = tape.matmul(u, h_in)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, b)
    };
    let z_pre = gate(tape, cell.w_update, cell.u_update, cell.b_update, h_prev)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, cell.w_reset, cell.u_reset, cell.b_reset, h_prev)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h_prev)?;
    let c_pre = gate(tape, cell.w_cand, cell.u_cand, cell.b_cand, rh)?;
    let cand = tape.tanh(c_pre);

    let hidden = tape.value(h_prev).len();
    let ones = tape.constant(Tensor::ones(&[hidden]));
    let one_minus_z = tape.sub(ones, z)?;
    let keep = tape.mul(one_minus_z, h_prev)?;
    let update = tape.mul(z, cand)?;
    tape.add(keep, update)
}

/// Output selection for [`bigru`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiGruOutput {
    /// Concatenated final forward and final backward states (one vector).
    Last,
    /// Concatenated per-position states (one vector per input step).
    PerStep,
}

/// Run a forward cell left-to-right and a backward cell right-to-left over
/// the sequence, both from zero initial states.
pub fn bigru(
    tape: &mut Tape,
    fwd: &GruCellVars,
    bwd: &GruCellVars,
    seq: &[Var],
    output: BiGruOutput,
) -> Result<Vec<Var>> {
    if seq.is_empty() {
        return Err(Error::invalid("bigru: empty sequence"));
    }
    let hidden = tape.value(fwd.b_update).len();
    let mut h = tape.constant(Tensor::zeros(&[hidden]));
    let mut fwd_states = Vec::with_capacity(seq.len());
    for &x in seq {
        h = gru_step(tape, fwd, x, h)?;
        fwd_states.push(h);
    }
    let mut h = tape.constant(Tensor::zeros(&[hidden]));
    let mut bwd_states = vec![h; seq.len()];
    for (i, &x) in seq.iter().enumerate().rev() {
        h = gru_step(tape, bwd, x, h)?;
        bwd_states[i] = h;
    }
    match output {
        BiGruOutput::Last => {
            let last_f = *fwd_states.last().expect("non-empty");
            let last_b = bwd_states[0];
            Ok(vec![tape.concat(&[last_f, last_b], 0)?])
        }
        BiGruOutput::PerStep => fwd_states
            .iter()
            .zip(&bwd_states)
            .map(|(&f, &b)| tape.concat(&[f, b], 0))
            .collect(),
    }
}
