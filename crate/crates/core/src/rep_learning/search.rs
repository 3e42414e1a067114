use rand::Rng;
use rand_distr::StandardNormal;

use super::SearchConfig;
use crate::function_spaces::{DiscriminatorFamily, DiscriminatorKind, FamilyMember, WitnessRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: WitnessRecord,
    pub budget_exhausted: bool,
    pub search_gap: f64,
    pub evaluations: usize,
}

fn record(member: Option<&FamilyMember>, theta: Vec<f64>, value: f64) -> WitnessRecord {
    WitnessRecord {
        feature: member.map(|m| m.feature),
        reward: member.and_then(|m| m.reward),
        coord: member.and_then(|m| m.coord),
        reference: None,
        theta,
        value,
    }
}

fn project(theta: &mut [f64], radius: f64) {
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        theta.iter_mut().for_each(|v| *v *= radius / norm);
    }
}

struct Ascent {
    theta: Vec<f64>,
    value: f64,
    exhausted: bool,
    evaluations: usize,
}

/// Sign-projected coordinate ascent: try `theta +- step e_j`, projected onto
/// the ball, accept the first improvement; halve the step after a sweep
/// without improvement.
fn ascend(
    mut theta: Vec<f64>,
    eval: &dyn Fn(&[f64]) -> f64,
    radius: f64,
    cfg: &SearchConfig,
) -> Ascent {
    project(&mut theta, radius);
    let mut value = eval(&theta);
    let mut evaluations = 1;
    let mut step = radius / 2.0;
    let mut sweeps = 0;
    let mut exhausted = false;
    while step >= radius * cfg.min_step_frac {
        if sweeps == cfg.max_steps {
            exhausted = true;
            break;
        }
        sweeps += 1;
        let mut improved = false;
        for j in 0..theta.len() {
            for sign in [1.0, -1.0] {
                let mut cand = theta.clone();
                cand[j] += sign * step;
                project(&mut cand, radius);
                let v = eval(&cand);
                evaluations += 1;
                if v > value {
                    theta = cand;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ascent {
        theta,
        value,
        exhausted,
        evaluations,
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Approximate `max_v score(v)` over a family.
///
/// `score` receives the values of a candidate on `X_{h+1}`. The zero class
/// and the simplex family are enumerated exactly; parametrised families use
/// `cfg.restarts` random points on the radius sphere plus any `seeds`, each
/// refined by coordinate ascent. Members are visited in index order and ties
/// keep the earlier candidate.
pub fn search_witness(
    family: &DiscriminatorFamily,
    score: &dyn Fn(&[f64]) -> f64,
    seeds: &dyn Fn(&FamilyMember) -> Vec<Vec<f64>>,
    cfg: &SearchConfig,
) -> SearchOutcome {
    if family.is_zero() {
        let y = vec![0.0; family.next_states()];
        return SearchOutcome {
            best: record(None, Vec::new(), score(&y)),
            budget_exhausted: false,
            search_gap: 0.0,
            evaluations: 1,
        };
    }
    let members = family.members();
    if family.kind() == DiscriminatorKind::FSimplexCoord {
        let mut best: Option<WitnessRecord> = None;
        for m in &members {
            let v = score(&family.values(m, &[]));
            if best.as_ref().is_none_or(|b| v > b.value) {
                best = Some(record(Some(m), Vec::new(), v));
            }
        }
        return SearchOutcome {
            best: best.expect("simplex family has members"),
            budget_exhausted: false,
            search_gap: 0.0,
            evaluations: members.len(),
        };
    }

    let d = family.dim();
    let radius = family.radius();
    let mut best: Option<WitnessRecord> = None;
    let mut exhausted = false;
    let mut gap: f64 = 0.0;
    let mut evaluations = 0;
    for (mi, m) in members.iter().enumerate() {
        let eval = |theta: &[f64]| score(&family.values(m, theta));
        let mut rng = cfg.stream.derive(mi as u64).rng();
        let mut starts = seeds(m);
        for _ in 0..cfg.restarts {
            let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            dir.iter_mut().for_each(|v| *v *= radius / norm);
            starts.push(dir);
        }
        let mut optima = Vec::with_capacity(starts.len());
        for start in starts {
            let a = ascend(start, &eval, radius, cfg);
            exhausted |= a.exhausted;
            evaluations += a.evaluations;
            optima.push(a.value);
            if best.as_ref().is_none_or(|b| a.value > b.value) {
                best = Some(record(Some(m), a.theta, a.value));
            }
        }
        let top = optima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        gap = gap.max(top - median(&mut optima));
    }
    SearchOutcome {
        best: best.expect("family has members"),
        budget_exhausted: exhausted,
        search_gap: gap,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_spaces::FeatureMap;
    use crate::rng::RngStream;

    #[test]
    fn finds_maximum_of_concave_score() {
        // Score = -(||theta - t*||^2) through the identity feature.
        let phi = FeatureMap::new(1, 2, 1, 2, vec![1.0, 0.0, 0.0, 1.0], "id").unwrap();
        let next = [phi];
        let fam = DiscriminatorFamily::f_unclipped(&next, 1.0).unwrap();
        let target = [0.3, -0.4];
        let score = |y: &[f64]| -((y[0] - target[0]).powi(2) + (y[1] - target[1]).powi(2));
        let cfg = SearchConfig {
            restarts: 4,
            stream: RngStream::new(1),
            ..SearchConfig::default()
        };
        let out = search_witness(&fam, &score, &|_| Vec::new(), &cfg);
        assert!((out.best.theta[0] - 0.3).abs() < 1e-3);
        assert!((out.best.theta[1] + 0.4).abs() < 1e-3);
        assert!(!out.budget_exhausted);
    }

    #[test]
    fn zero_family_scores_zero_function() {
        let fam = DiscriminatorFamily::zero(DiscriminatorKind::FClipped, 3);
        let out = search_witness(
            &fam,
            &|y| y.iter().sum(),
            &|_| Vec::new(),
            &SearchConfig::default(),
        );
        assert_eq!(out.best.value, 0.0);
        assert_eq!(out.best.feature, None);
    }
}
