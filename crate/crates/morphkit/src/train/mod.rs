//! Joint multi-task optimization: Adadelta, progressive freezing, the
//! loss-weight calibration sweep, and the individual-vs-multi-task
//! comparison harness.

mod adadelta;
mod calibrate;
mod compare;
mod joint;

pub use adadelta::{adadelta_update, AdadeltaParams, AdadeltaSlot};
pub use calibrate::{
    calibrate_lambdas, CalibrationConfig, CalibrationResult, GridRow, Phase2Adjustment,
};
pub use compare::{run_individual_vs_mt, ComparisonReport, ComparisonRow};
pub use joint::{
    batch_gradients, evaluate_split, train_joint, train_joint_with_hook, BatchGradients, DevEval,
    EpochStats, FreezeState, OptimizerKind, TrainConfig, TrainHistory,
};
