//! Representation-learning oracles.
//!
//! - [`flo_minmaxmin`]: the variance-corrected min-max-min objective, with a
//!   heuristic search over discriminator parameters.
//! - [`flo_eigen`]: the exact ridge/eigenvector reduction for unclipped
//!   discriminators over an enumerable class.
//! - [`greedy_select`]: the iterative greedy fit/witness procedure.
//!
//! All oracles work on [`LevelStats`](crate::regression::LevelStats), so the
//! same code runs on sampled data and on exact occupancies.

mod oracles;
mod problem;
mod search;

use serde::{Deserialize, Serialize};

use crate::function_spaces::WitnessRecord;
use crate::rng::RngStream;

pub use oracles::{flo_eigen, flo_minmaxmin, greedy_select, EigenTriple};
pub use problem::LevelProblem;
pub use search::{search_witness, SearchOutcome};

/// Heuristic search over `theta` for clipped discriminators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Random starting points on the radius-`B` sphere per family member.
    pub restarts: usize,
    /// Coordinate-ascent sweeps per restart.
    pub max_steps: usize,
    /// Ascent stops once the step falls below this fraction of `B`.
    pub min_step_frac: f64,
    /// Ridge parameter used to seed searches over unclipped families.
    pub ridge_lambda: f64,
    pub stream: RngStream,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 64,
            max_steps: 200,
            min_step_frac: 1e-4,
            ridge_lambda: 1e-3,
            stream: RngStream::new(0),
        }
    }
}

/// Parameters of the greedy procedure; everything else is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub eps_tol: f64,
    /// Range bound `L` of the discriminators.
    pub l_bound: f64,
    /// Replaces the iteration cap `T_max` when set.
    pub iteration_limit: Option<usize>,
}

impl GreedyConfig {
    pub fn new(eps_tol: f64, l_bound: f64) -> Self {
        Self {
            eps_tol,
            l_bound,
            iteration_limit: None,
        }
    }

    /// `eps_0 = eps_tol / (52 d^2)`.
    pub fn eps0(&self, d: usize) -> f64 {
        self.eps_tol / (52.0 * (d * d) as f64)
    }

    /// Stop once the witness value is below `24 d^2 eps_0 + eps_0^2`.
    pub fn threshold(&self, d: usize) -> f64 {
        let e = self.eps0(d);
        24.0 * (d * d) as f64 * e + e * e
    }

    /// `T_max = 52 L^2 d^2 / eps_tol`, rounded up.
    pub fn t_max(&self, d: usize) -> usize {
        self.iteration_limit.unwrap_or_else(|| {
            (52.0 * self.l_bound * self.l_bound * (d * d) as f64 / self.eps_tol).ceil() as usize
        })
    }

    /// Radius of the `phi_hat_t` regression in the witness step:
    /// `B_t = L sqrt(d t) / 2`.
    pub fn radius_at(&self, d: usize, t: usize) -> f64 {
        self.l_bound * ((d * t) as f64).sqrt() / 2.0
    }

    /// Radius of the fit step and of the comparison term: `L sqrt(d)`.
    pub fn fit_radius(&self, d: usize) -> f64 {
        self.l_bound * (d as f64).sqrt()
    }

    /// `B = sqrt(13 L^4 d^3 / eps_tol)`, the radius the guarantee is stated
    /// for.
    pub fn final_radius(&self, d: usize) -> f64 {
        (13.0 * self.l_bound.powi(4) * (d * d * d) as f64 / self.eps_tol).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The candidate list was evaluated exhaustively.
    Exhaustive,
    /// Greedy: the witness value fell below the threshold.
    Converged,
    /// Greedy: `T_max` iterations without convergence.
    IterationCap,
}

/// Outcome of one oracle call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub oracle: String,
    pub level: usize,
    pub chosen: usize,
    pub label: String,
    pub objective: f64,
    /// Objective of every candidate (min-max-min and eigen oracles).
    pub candidate_objectives: Vec<f64>,
    pub iterations: usize,
    /// Greedy: one record per iteration. Otherwise the maximising witness of
    /// each candidate.
    pub witnesses: Vec<WitnessRecord>,
    pub termination: Termination,
    /// Some restart hit the ascent step cap.
    pub budget_exhausted: bool,
    /// Largest spread between the best and the median local optimum across
    /// restarts. Zero for exact searches; a large value means the clipped
    /// landscape is multimodal and the maximum may be underestimated.
    pub search_gap: f64,
    pub elapsed_seconds: f64,
}
