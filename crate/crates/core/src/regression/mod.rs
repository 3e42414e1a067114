//! Squared-loss kernel.
//!
//! Losses are mean losses throughout: `L(w) = (1/n) sum_i (<x_i, w> - y_i)^2`.
//! [`empirical_loss`] also reports the plain sum.
//!
//! Two front ends share one solver. [`DesignMatrix`] works on explicit rows
//! and is what the tests and small examples use. [`LevelStats`] and
//! [`FeatureStats`] aggregate a tabular dataset into sufficient statistics,
//! so that every regression over a level costs `O(d^2 + d |X_{h+1}|)`
//! regardless of `n`.

mod design;
mod solver;
mod stats;

pub use design::{
    constrained_lsq, empirical_loss, residual_operator, ridge_solve, sym_quad_max, DesignMatrix,
    Loss, QuadMax, ResidualOperator,
};
pub use solver::{BallSolution, Gram, BISECTION_MAX_ITER, BISECTION_REL_TOL, JITTER};
pub use stats::{FeatureStats, LevelStats};
