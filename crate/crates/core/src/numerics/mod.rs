//! Dense linear algebra, losses, SGD and a finite-difference oracle.
//!
//! Everything is `f64`. Operations are pure functions of their inputs; the
//! only mutation is the in-place [`sgd_step`].

mod matrix;
mod ops;
mod rng;

pub use matrix::Matrix;
pub use ops::{
    cross_entropy, finite_diff_gradient, max_relative_error, relative_error, sgd_step, softmax_rows,
};
pub use rng::{mix_seed, Rng};

/// Step used by the gradient checks in this crate.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
