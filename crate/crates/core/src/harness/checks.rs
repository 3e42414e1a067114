//! Exact-oracle checks run by the `verify` stage.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::report::{CheckResult, DownstreamResult, PlannerSummary};
use crate::driver::{CoverageReport, PolicyCover};
use crate::error::Result;
use crate::function_spaces::FeatureClass;
use crate::mdp::{exact_bellman_backup, max_terminal_value, LatentLowRankMDP};
use crate::rng::RngStream;

fn check(name: &str, value: f64, tolerance: f64, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        value,
        tolerance,
        detail,
    }
}

/// Backups of random `f: X_{h+1} -> [0, 1]` are linear in `phi*` with
/// `||theta|| <= sqrt(d)`.
pub fn linearity(
    mdp: &LatentLowRankMDP,
    samples: usize,
    stream: &RngStream,
) -> Result<CheckResult> {
    let d = mdp.dim();
    let mut worst_err: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for h in 0..mdp.horizon() {
        let mut rng = stream.item(h as u64);
        for _ in 0..samples {
            let f: Vec<f64> = (0..mdp.num_states(h + 1)).map(|_| rng.random()).collect();
            let b = exact_bellman_backup(mdp, h, &f)?;
            for x in 0..mdp.num_states(h) {
                for a in 0..mdp.num_actions() {
                    let lin: f64 = mdp
                        .phi_star(h, x, a)
                        .iter()
                        .zip(&b.theta)
                        .map(|(p, t)| p * t)
                        .sum();
                    let direct: f64 = mdp
                        .transition_row(h, x, a)
                        .iter()
                        .zip(&f)
                        .map(|(p, v)| p * v)
                        .sum();
                    worst_err = worst_err.max((lin - direct).abs());
                }
            }
            worst_norm = worst_norm.max(b.theta.iter().map(|t| t * t).sum::<f64>().sqrt());
        }
    }
    let ok = worst_err < 1e-10 && worst_norm <= (d as f64).sqrt() + 1e-12;
    Ok(check(
        "linearity",
        worst_err,
        1e-10,
        ok,
        format!("max |backup - phi* theta| = {worst_err:e}, max ||theta|| = {worst_norm}"),
    ))
}

/// `||phi*(x, a)|| <= 1` and `||sum_x g(x) mu*(x)|| <= sqrt(d)` for random
/// `g: X -> [0, 1]`.
pub fn norms(mdp: &LatentLowRankMDP, samples: usize, stream: &RngStream) -> CheckResult {
    let d = mdp.dim();
    let mut phi_max: f64 = 0.0;
    let mut mu_max: f64 = 0.0;
    for h in 0..mdp.horizon() {
        for x in 0..mdp.num_states(h) {
            for a in 0..mdp.num_actions() {
                phi_max = phi_max.max(
                    mdp.phi_star(h, x, a)
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt(),
                );
            }
        }
        let mut rng = stream.item(h as u64);
        for _ in 0..samples {
            let mut acc = vec![0.0; d];
            for x in 0..mdp.num_states(h + 1) {
                let g: f64 = rng.random();
                for (s, m) in acc.iter_mut().zip(mdp.mu_star(h, x)) {
                    *s += g * m;
                }
            }
            mu_max = mu_max.max(acc.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    let bound = (d as f64).sqrt();
    check(
        "norms",
        mu_max,
        bound,
        phi_max <= 1.0 + 1e-12 && mu_max <= bound + 1e-12,
        format!("max ||phi*|| = {phi_max}, max ||sum g mu*|| = {mu_max}"),
    )
}

/// `T <= ceil((8d / beta) ln(1 + 8 / beta))` for every converged planner.
pub fn planner_iterations(planner: &[PlannerSummary], d: usize, beta: f64) -> CheckResult {
    let bound = ((8.0 * d as f64 / beta) * (1.0 + 8.0 / beta).ln()).ceil();
    let worst = planner.iter().map(|p| p.iterations).max().unwrap_or(0) as f64;
    let all_converged = planner.iter().all(|p| p.converged);
    check(
        "planner_iterations",
        worst,
        bound,
        all_converged && worst <= bound,
        format!("max iterations {worst}, all converged: {all_converged}"),
    )
}

/// `max_pi E_pi min(1, ||phi_hat||^2_{Gamma_T^{-1}}) <= 2 beta` at every
/// planned level, by value iteration on the quadratic terminal reward.
pub fn planner_bonus(
    mdp: &LatentLowRankMDP,
    class: &FeatureClass,
    cover: &PolicyCover,
    phi_hat: &[usize],
    beta: f64,
) -> CheckResult {
    let mut worst: f64 = 0.0;
    for (h, gamma) in cover.gammas.iter().enumerate() {
        let Some(gamma) = gamma else { continue };
        let d = gamma.len();
        let g = DMatrix::from_fn(d, d, |i, j| gamma[i][j]);
        let eig = SymmetricEigen::new(g);
        let inv_diag = eig.eigenvalues.map(|l| 1.0 / l.max(1.0));
        let inv =
            &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
        let phi = &class.level(h)[phi_hat[h]];
        let reward: Vec<f64> = (0..phi.num_states() * phi.num_actions())
            .map(|p| {
                let r = nalgebra::DVector::from_column_slice(phi.row(p));
                (r.transpose() * &inv * &r)[(0, 0)].clamp(0.0, 1.0)
            })
            .collect();
        worst = worst.max(max_terminal_value(mdp, h, &reward));
    }
    check(
        "planner_bonus",
        worst,
        2.0 * beta,
        worst <= 2.0 * beta,
        format!("max exact bonus {worst}"),
    )
}

pub fn coverage(report: &CoverageReport) -> CheckResult {
    check(
        "coverage",
        report.min_latent,
        report.latent_threshold,
        report.latent_ok,
        format!(
            "min latent occupancy {} vs eta_min / (2 kappa) = {}",
            report.min_latent, report.latent_threshold
        ),
    )
}

/// `v* - v^pi <= tol * H` for every reward, and no gap below `-1e-9`.
pub fn downstream(results: &[DownstreamResult], horizon: usize, tol: f64) -> CheckResult {
    let worst = results
        .iter()
        .map(|r| r.representation.gap.max(r.full_class.gap))
        .fold(0.0, f64::max);
    let min_gap = results
        .iter()
        .map(|r| r.representation.gap.min(r.full_class.gap))
        .fold(0.0, f64::min);
    let bound = tol * horizon as f64;
    check(
        "downstream",
        worst,
        bound,
        worst <= bound && min_gap >= -1e-9,
        format!("max gap {worst}, min gap {min_gap}"),
    )
}

pub fn determinism(first: &str, second: &str) -> CheckResult {
    let same = first == second;
    check(
        "determinism",
        f64::from(u8::from(same)),
        1.0,
        same,
        if same {
            "metrics identical".into()
        } else {
            "metrics differ between runs".into()
        },
    )
}
