//! Reverse-mode differentiation for the dense matrices used by the model.

mod gradcheck;
mod tape;

pub use gradcheck::{
    evaluate, evaluate_with_gradients, finite_difference_check, tape_fn, Bound, GradCheckOptions,
    GradCheckReport, ParamCheck, ParamSet, TapeFn,
};
pub use tape::{concat_cols, concat_rows, GradModeGuard, NodeId, Tape, Var};
