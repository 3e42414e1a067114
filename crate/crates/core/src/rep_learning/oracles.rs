use std::time::Instant;

use nalgebra::DMatrix;

use super::{search_witness, GreedyConfig, LevelProblem, OracleReport, SearchConfig, Termination};
use crate::error::Result;
use crate::function_spaces::{
    DiscriminatorFamily, DiscriminatorKind, FamilyMember, FeatureMap, WitnessRecord,
};
use crate::regression::sym_quad_max;

fn argmin_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// `U` with rows `E_unif phi'(x', .)`.
fn mean_matrix(rows: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows.len() / d, d, rows)
}

/// Starting points for unclipped searches: `+-` the top eigenvector of the
/// ridge-residual difference against every comparison feature.
fn eigen_seeds(
    problem: &LevelProblem,
    family: &DiscriminatorFamily,
    phi: usize,
    member: &FamilyMember,
    lambda: f64,
) -> Vec<Vec<f64>> {
    if family.kind() != DiscriminatorKind::FUnclipped {
        return Vec::new();
    }
    let u = mean_matrix(family.mean_rows(member.feature), family.dim());
    let stats = problem.stats();
    let q_phi = problem
        .feature_stats(phi)
        .ridge_residual_quad(stats, lambda);
    let mut seeds = Vec::new();
    for other in 0..problem.len() {
        if other == phi {
            continue;
        }
        let q_other = problem
            .feature_stats(other)
            .ridge_residual_quad(stats, lambda);
        let m = u.transpose() * (&q_phi - q_other) * &u;
        let top = sym_quad_max(&m, family.radius());
        if top.value > 0.0 {
            seeds.push(top.theta.iter().copied().collect());
            seeds.push(top.theta.iter().map(|v| -v).collect());
        }
    }
    seeds
}

/// Heuristic min-max-min oracle.
///
/// For each candidate `phi` approximates
/// `max_v { min_{||w|| <= radius} L(phi, w, v) - min_{phi~, ||w~|| <= ref_radius} L(phi~, w~, v) }`
/// with [`search_witness`] and returns the candidate with the smallest
/// value. Candidates are searched in parallel with identical seeds.
pub fn flo_minmaxmin(
    problem: &LevelProblem,
    family: &DiscriminatorFamily,
    radius: f64,
    ref_radius: f64,
    search: &SearchConfig,
) -> Result<(usize, OracleReport)> {
    let start = Instant::now();
    let outcomes: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..problem.len())
            .map(|phi| {
                scope.spawn(move || {
                    let score = |y: &[f64]| problem.excess(phi, y, radius, ref_radius);
                    let seeds = |m: &FamilyMember| {
                        eigen_seeds(problem, family, phi, m, search.ridge_lambda)
                    };
                    search_witness(family, &score, &seeds, search)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("search thread panicked"))
            .collect()
    });
    let objectives: Vec<f64> = outcomes.iter().map(|o| o.best.value).collect();
    let chosen = argmin_lowest(&objectives);
    let witnesses = outcomes
        .iter()
        .map(|o| {
            let mut w = o.best.clone();
            let member = FamilyMember {
                feature: w.feature.unwrap_or(0),
                reward: w.reward,
                coord: w.coord,
            };
            let y = family.values(&member, &w.theta);
            w.reference = Some(problem.best_reference(&y, ref_radius).0);
            w
        })
        .collect();
    Ok((
        chosen,
        OracleReport {
            oracle: "minmaxmin".into(),
            level: problem.stats().level(),
            chosen,
            label: problem.features()[chosen].label().to_string(),
            objective: objectives[chosen],
            candidate_objectives: objectives,
            iterations: 1,
            witnesses,
            termination: Termination::Exhaustive,
            budget_exhausted: outcomes.iter().any(|o| o.budget_exhausted),
            search_gap: outcomes.iter().map(|o| o.search_gap).fold(0.0, f64::max),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// One `(phi, phi~, phi')` term of the eigen oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTriple {
    pub phi: usize,
    pub reference: usize,
    pub next: usize,
    /// `M = U^T (Q(phi) - Q(phi~)) U` (mean-normalised).
    pub matrix: DMatrix<f64>,
    /// `max_{||theta|| <= sqrt(d)} theta^T M theta`.
    pub value: f64,
    pub theta: Vec<f64>,
}

impl EigenTriple {
    /// Every triple, in `(phi, phi~, phi')` lexicographic order.
    pub fn enumerate(problem: &LevelProblem, next: &[FeatureMap], lambda: f64) -> Vec<EigenTriple> {
        let stats = problem.stats();
        let q: Vec<DMatrix<f64>> = (0..problem.len())
            .map(|i| problem.feature_stats(i).ridge_residual_quad(stats, lambda))
            .collect();
        let mut out = Vec::new();
        let us: Vec<DMatrix<f64>> = next
            .iter()
            .map(|f| {
                let rows: Vec<f64> = (0..f.num_states()).flat_map(|x| f.mean_action(x)).collect();
                mean_matrix(&rows, f.dim())
            })
            .collect();
        // R[phi][phi'] = U^T Q(phi) U.
        let r: Vec<Vec<DMatrix<f64>>> = q
            .iter()
            .map(|qi| us.iter().map(|u| u.transpose() * qi * u).collect())
            .collect();
        for phi in 0..problem.len() {
            for reference in 0..problem.len() {
                for (j, f) in next.iter().enumerate() {
                    let m = &r[phi][j] - &r[reference][j];
                    let top = sym_quad_max(&m, (f.dim() as f64).sqrt());
                    out.push(EigenTriple {
                        phi,
                        reference,
                        next: j,
                        matrix: m,
                        value: top.value,
                        theta: top.theta.iter().copied().collect(),
                    });
                }
            }
        }
        out
    }
}

/// Exact oracle for unclipped discriminators with ridge parameter `lambda`:
/// `argmin_phi max_{phi~, phi'} max_{||theta|| <= sqrt(d)} theta^T M theta`.
///
/// With no next-level features (last level) every objective is zero and the
/// first candidate is returned.
pub fn flo_eigen(
    problem: &LevelProblem,
    next: &[FeatureMap],
    lambda: f64,
) -> Result<(usize, OracleReport)> {
    let start = Instant::now();
    let triples = EigenTriple::enumerate(problem, next, lambda);
    let mut objectives = vec![0.0; problem.len()];
    let mut witnesses: Vec<WitnessRecord> = (0..problem.len())
        .map(|phi| WitnessRecord {
            feature: None,
            reward: None,
            coord: None,
            reference: Some(phi),
            theta: Vec::new(),
            value: 0.0,
        })
        .collect();
    for t in &triples {
        if t.value > objectives[t.phi] {
            objectives[t.phi] = t.value;
            witnesses[t.phi] = WitnessRecord {
                feature: Some(t.next),
                reward: None,
                coord: None,
                reference: Some(t.reference),
                theta: t.theta.clone(),
                value: t.value,
            };
        }
    }
    let chosen = argmin_lowest(&objectives);
    Ok((
        chosen,
        OracleReport {
            oracle: "eigen".into(),
            level: problem.stats().level(),
            chosen,
            label: problem.features()[chosen].label().to_string(),
            objective: objectives[chosen],
            candidate_objectives: objectives,
            iterations: 1,
            witnesses,
            termination: Termination::Exhaustive,
            budget_exhausted: false,
            search_gap: 0.0,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Iterative greedy selection.
///
/// Iteration `t` fits every candidate to the `t` witnesses collected so far
/// (radius `L sqrt(d)` per column) and keeps the minimiser `phi_hat_t`, then
/// searches for the discriminator maximising
/// `min_{||w|| <= B_t} L(phi_hat_t, w, v) - min_{phi~, ||w~|| <= L sqrt(d)} L(phi~, w~, v)`.
/// Stops when that value drops below the threshold or after `T_max`
/// iterations. The first witness is the `theta = 0` member of the family.
pub fn greedy_select(
    problem: &LevelProblem,
    family: &DiscriminatorFamily,
    cfg: &GreedyConfig,
    search: &SearchConfig,
) -> Result<(usize, OracleReport)> {
    let start = Instant::now();
    let d = problem.dim();
    let fit_radius = cfg.fit_radius(d);
    let threshold = cfg.threshold(d);
    let t_max = cfg.t_max(d).max(1);

    let first = family.members().first().copied().unwrap_or(FamilyMember {
        feature: 0,
        reward: None,
        coord: None,
    });
    let mut targets = vec![family.values(&first, &vec![0.0; family.dim()])];
    let mut witnesses = Vec::new();
    let mut exhausted = false;
    let mut gap: f64 = 0.0;
    let mut t = 1;
    let (chosen, termination, objective) = loop {
        let totals: Vec<f64> = (0..problem.len())
            .map(|phi| {
                targets
                    .iter()
                    .map(|y| problem.loss(phi, y, fit_radius))
                    .sum()
            })
            .collect();
        let phi_hat = argmin_lowest(&totals);
        let radius_t = cfg.radius_at(d, t);
        let score = |y: &[f64]| {
            problem.loss(phi_hat, y, radius_t) - problem.best_reference(y, fit_radius).1
        };
        let seeds =
            |m: &FamilyMember| eigen_seeds(problem, family, phi_hat, m, search.ridge_lambda);
        let out = search_witness(family, &score, &seeds, &search.with_iteration(t));
        exhausted |= out.budget_exhausted;
        gap = gap.max(out.search_gap);
        let member = FamilyMember {
            feature: out.best.feature.unwrap_or(0),
            reward: out.best.reward,
            coord: out.best.coord,
        };
        let y = family.values(&member, &out.best.theta);
        let mut record = out.best.clone();
        record.reference = Some(problem.best_reference(&y, fit_radius).0);
        let l = record.value;
        witnesses.push(record);
        if l < threshold {
            break (phi_hat, Termination::Converged, l);
        }
        if t >= t_max {
            break (phi_hat, Termination::IterationCap, l);
        }
        targets.push(y);
        t += 1;
    };
    Ok((
        chosen,
        OracleReport {
            oracle: "greedy".into(),
            level: problem.stats().level(),
            chosen,
            label: problem.features()[chosen].label().to_string(),
            objective,
            candidate_objectives: Vec::new(),
            iterations: t,
            witnesses,
            termination,
            budget_exhausted: exhausted,
            search_gap: gap,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

impl SearchConfig {
    /// Fresh restart directions for greedy iteration `t`.
    fn with_iteration(&self, t: usize) -> SearchConfig {
        SearchConfig {
            stream: self.stream.derive(1_000_000 + t as u64),
            ..*self
        }
    }
}
