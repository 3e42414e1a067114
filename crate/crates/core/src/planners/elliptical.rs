use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{fqe, fqi, FqiVariant, PlanningContext};
use crate::error::{Error, Result};
use crate::function_spaces::{FeatureMap, RewardFunction};
use crate::mdp::{MixturePolicy, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticalConfig {
    pub beta: f64,
    /// Iteration cap; `None` uses [`default_t_max`].
    pub t_max: Option<usize>,
}

impl EllipticalConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta = {beta} must lie in (0, 1]"
            )));
        }
        Ok(Self { beta, t_max: None })
    }

    pub fn cap(&self, d: usize) -> usize {
        self.t_max.unwrap_or_else(|| default_t_max(d, self.beta))
    }
}

/// `ceil((8d / beta) ln(1 + 8 / beta)) + 5`.
pub fn default_t_max(d: usize, beta: f64) -> usize {
    ((8.0 * d as f64 / beta) * (1.0 + 8.0 / beta).ln()).ceil() as usize + 5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub v_hat: f64,
    pub trace_gamma: f64,
    pub lambda_min_gamma: f64,
    /// Whether eigenvalues of `Gamma_t` were raised to 1 before inversion.
    pub floored: bool,
}

#[derive(Debug, Clone)]
pub struct EllipticalResult {
    /// Uniform mixture over `pi_1..pi_T`, ending at the planning level.
    pub mixture: MixturePolicy,
    pub gamma: DMatrix<f64>,
    /// `Gamma_0, ..., Gamma_T`.
    pub gamma_history: Vec<DMatrix<f64>>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl EllipticalResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn policies(&self) -> &[Policy] {
        self.mixture.member_policies()
    }
}

/// `Gamma^{-1}` with eigenvalues floored at 1, and whether the floor was hit.
fn floored_inverse(gamma: &DMatrix<f64>) -> (DMatrix<f64>, f64, bool) {
    let eig = SymmetricEigen::new(gamma.clone());
    let lambda_min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let floored = lambda_min < 1.0;
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(1.0));
    let v = &eig.eigenvectors;
    (
        v * DMatrix::from_diagonal(&inv) * v.transpose(),
        lambda_min,
        floored,
    )
}

fn reward_at_level(
    ctx: &PlanningContext,
    level: usize,
    table: Vec<f64>,
    label: &str,
) -> Result<RewardFunction> {
    let mut tables: Vec<Vec<f64>> = (0..level)
        .map(|h| vec![0.0; ctx.stats(h).pair_weights().len()])
        .collect();
    tables.push(table);
    RewardFunction::new(ctx.stats(level).num_actions(), tables, label)
}

/// `R(x, a) = min(1, ||phi(x, a)||^2_{gamma_inv})` at `level`, zero before.
pub fn elliptical_reward(
    ctx: &PlanningContext,
    level: usize,
    phi: &FeatureMap,
    gamma_inv: &DMatrix<f64>,
) -> Result<RewardFunction> {
    let d = phi.dim();
    let table = (0..phi.num_states() * phi.num_actions())
        .map(|p| {
            let row = phi.row(p);
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += row[i] * gamma_inv[(i, j)] * row[j];
                }
            }
            q.clamp(0.0, 1.0)
        })
        .collect();
    reward_at_level(ctx, level, table, "elliptical")
}

/// Estimate of `E_pi[phi phi^T]` at `level`: entry `(i, j)` is
/// `2 FQE((1 + phi_i phi_j) / 2) - 1`, clamped to `[-1, 1]` and symmetrised.
fn covariance_estimate(
    ctx: &PlanningContext,
    level: usize,
    phi: &FeatureMap,
    policy: &Policy,
    init: &[f64],
) -> Result<DMatrix<f64>> {
    let d = phi.dim();
    let pairs = phi.num_states() * phi.num_actions();
    let mut sigma = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let table = (0..pairs)
                .map(|p| {
                    let row = phi.row(p);
                    ((1.0 + row[i] * row[j]) / 2.0).clamp(0.0, 1.0)
                })
                .collect();
            let r = reward_at_level(ctx, level, table, "covariance")?;
            let v = (2.0 * fqe(ctx, &r, policy, init)?.value - 1.0).clamp(-1.0, 1.0);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok(sigma)
}

/// Elliptical planning in the learned feature `phi` at `level`.
///
/// Each round plans greedily for the elliptical bonus of the current
/// `Gamma`, estimates the new policy's feature covariance by FQE, and adds it
/// to `Gamma`. Stops once the estimated bonus of the planned policy is at
/// most `3 beta / 4`, or after the iteration cap.
pub fn elliptical_planner(
    ctx: &PlanningContext,
    level: usize,
    phi: &FeatureMap,
    init: &[f64],
    cfg: &EllipticalConfig,
) -> Result<EllipticalResult> {
    if phi.level() != level {
        return Err(Error::LevelMismatch {
            expected: level,
            found: phi.level(),
        });
    }
    ctx.require(level + 1)?;
    let d = phi.dim();
    let k = ctx.stats(level).num_actions();
    let mut gamma = DMatrix::identity(d, d);
    let mut history = vec![gamma.clone()];
    let mut trace = Vec::new();
    let mut policies = Vec::new();
    let mut converged = false;
    let (mut gamma_inv, _, _) = floored_inverse(&gamma);
    for t in 1..=cfg.cap(d) {
        let reward = elliptical_reward(ctx, level, phi, &gamma_inv)?;
        let policy = fqi(ctx, &reward, FqiVariant::Elliptical)?.policy;
        let v_hat = fqe(ctx, &reward, &policy, init)?.value.clamp(0.0, 1.0);
        gamma += covariance_estimate(ctx, level, phi, &policy, init)?;
        let (inv, lambda_min, floored) = floored_inverse(&gamma);
        gamma_inv = inv;
        history.push(gamma.clone());
        trace.push(TraceRow {
            t,
            v_hat,
            trace_gamma: gamma.trace(),
            lambda_min_gamma: lambda_min,
            floored,
        });
        policies.push(policy);
        if v_hat <= 0.75 * cfg.beta {
            converged = true;
            break;
        }
    }
    Ok(EllipticalResult {
        mixture: MixturePolicy::new(k, policies, level as isize, 0)?,
        gamma,
        gamma_history: history,
        trace,
        converged,
    })
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
