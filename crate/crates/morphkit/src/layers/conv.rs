//! Character n-gram convolutions with paired max/average pooling, and the
//! per-word feature vector assembled from both filter widths.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Tape handles for one convolutional layer: `weights` holds one flattened
/// `d x width` filter per row, `bias` one scalar per filter.
#[derive(Debug, Clone, Copy)]
pub struct ConvLayerVars {
    pub weights: Var,
    pub bias: Var,
    pub width: usize,
}

/// ReLU-activated valid convolution over the character axis.
/// Input is `[d, len]`; output is `[n_filters, len - width + 1]`.
pub fn conv_forward(tape: &mut Tape, chars: Var, layer: &ConvLayerVars) -> Result<Var> {
    let pre = tape.conv1d(chars, layer.weights, layer.bias, layer.width)?;
    Ok(tape.relu(pre))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Non-overlapping window-2 stride-2 pooling along the feature-map axis;
/// a trailing odd column is dropped, matching the floor(L/2) output size.
pub fn pool(tape: &mut Tape, x: Var, mode: PoolMode) -> Result<Var> {
    match mode {
        PoolMode::Max => tape.pool2_max(x),
        PoolMode::Avg => tape.pool2_avg(x),
    }
}

/// Concatenate the four pooled maps (max-4, avg-4, max-5, avg-5 order)
/// channelwise and flatten to one vector per word: with pooled width `p`
/// and `n` maps each, the result has length `4 * n * p`.
pub fn build_z(tape: &mut Tape, p4max: Var, p4avg: Var, p5max: Var, p5avg: Var) -> Result<Var> {
    let parts = [p4max, p4avg, p5max, p5avg];
    let width = tape.value(parts[0]).cols();
    for &p in &parts[1..] {
        if tape.value(p).cols() != width {
            return Err(Error::Shape {
                op: "build_z",
                lhs: tape.value(parts[0]).shape().to_vec(),
                rhs: tape.value(p).shape().to_vec(),
            });
        }
    }
    // [n, p] blocks -> [p, 4n] position-major matrix -> flat vector.
    let mut transposed = Vec::with_capacity(4);
    for &p in &parts {
        transposed.push(tape.transpose(p)?);
    }
    let stacked = tape.concat(&transposed, 1)?;
    let total = tape.value(stacked).len();
    tape.reshape(stacked, vec![total])
}

/// Arrange per-word vectors into the tagger's input sequence:
/// left context, the word itself, right context. Expects exactly
/// `2*cw + 1` vectors of equal length.
pub fn build_context_seq(tape: &Tape, zs: Vec<Var>, cw: usize) -> Result<Vec<Var>> {
    if zs.len() != 2 * cw + 1 {
        return Err(Error::invalid(format!(
            "context sequence needs {} vectors for cw={cw}, got {}",
            2 * cw + 1,
            zs.len()
        )));
    }
    let len = tape.value(zs[0]).len();
    for &z in &zs {
        if tape.value(z).len() != len {
            return Err(Error::Shape {
                op: "build_context_seq",
                lhs: vec![len],
                rhs: tape.value(z).shape().to_vec(),
            });
        }
    }
    Ok(zs)
}
