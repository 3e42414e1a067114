//! Model-free representation learning and reward-free exploration in
//! low-rank MDPs, on synthetic tabular environments where every quantity
//! the learners estimate can also be computed exactly.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: latent-variable low-rank environments, sampling and the
//!   dynamic-programming oracles used throughout the test-suite.
//! - [`function_spaces`]: feature maps, discriminators, rewards and
//!   Q-functions.
//! - [`regression`]: the squared-loss kernel (ball-constrained least
//!   squares, ridge, residual operator, quadratic maximisation).
//! - [`rep_learning`]: the three representation-learning oracles.
//! - [`planners`]: FQI, FQE and the offline elliptical planner.
//! - [`driver`]: exploration, the full pipeline and downstream planning.
//! - [`harness`]: generators, configuration, persistence and the CLI stages.

pub mod driver;
pub mod error;
pub mod function_spaces;
pub mod harness;
pub mod mdp;
pub mod planners;
pub mod regression;
pub mod rep_learning;
pub mod rng;

pub use error::{Error, Result};
