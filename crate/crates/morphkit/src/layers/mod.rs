//! Neural building blocks: embedding lookup, noise and dropout
//! regularizers, width-4/5 convolutions with paired pooling, GRU cells and
//! the bidirectional wrapper, tag-head dense stacks, scaled bilinear
//! attention, and the weighted joint loss.

mod attention;
mod conv;
mod dense;
mod gru;
mod loss;
mod regularize;

pub use attention::{luong_attention, stack_columns};
pub use conv::{build_context_seq, build_z, conv_forward, pool, ConvLayerVars, PoolMode};
pub use dense::{dense_head, DenseHeadVars};
pub use gru::{bigru, gru_step, BiGruOutput, GruCellVars};
pub use loss::{
    joint_loss, log_prob_at, task_losses, weighted_total, ExamplePrediction, ExampleTarget,
    LossWeights, LOG_EPS,
};
pub use regularize::{dropout, gaussian_noise};

use crate::autodiff::{Tape, Var};
use crate::error::Result;

/// Look up embedding rows for a sequence of character ids.
/// Output row `i` is the table row for `ids[i]`; the padding id maps to
/// its own trainable row like any other.
pub fn embed(tape: &mut Tape, table: Var, ids: &[usize]) -> Result<Var> {
    tape.rows(table, ids)
}
