//! Structural max-margin training: cutting-plane constraint generation
//! over the restricted dual QP, and a sweep over the regularization
//! parameter `C`.

mod cutting_plane;
mod ipm;
pub mod qp;
mod sweep;

pub use cutting_plane::{
    cutting_plane_train, cutting_plane_train_with, hinge, mean_training_loss, prepare_examples,
    IterationRecord, TrainConfig, TrainOutcome, TrainStats, TrainingExample,
};
pub use qp::{solve_restricted_qp, solve_restricted_qp_pairwise, Constraint, QpSolution, WorkingSet};
pub use sweep::{c_sweep, default_c_grid, mean_dcem, SweepReport, SweepRow};
