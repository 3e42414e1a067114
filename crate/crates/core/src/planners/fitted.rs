use serde::{Deserialize, Serialize};

use super::PlanningContext;
use crate::error::{Error, Result};
use crate::function_spaces::{clip, greedy_policy_from_q, RewardFunction};
use crate::mdp::{Behavior, Policy};

/// Function class of an FQI run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FqiVariant {
    /// Every feature of the class, `||w|| <= H sqrt(d)`, values in `[0, H]`.
    FullClass,
    /// A single learned feature per level (the context holds one candidate),
    /// `||w|| <= radius` (default `H sqrt(d)`), values in `[0, H]`.
    Representation { radius: Option<f64> },
    /// Every feature of the class, `||w|| <= sqrt(d)`, values in `[0, 1]`.
    Elliptical,
}

impl FqiVariant {
    /// `(radius, clip)` for horizon `h` and dimension `d`.
    pub fn radius_and_clip(self, horizon: usize, d: usize) -> (f64, f64) {
        let sd = (d as f64).sqrt();
        let hf = horizon as f64;
        match self {
            FqiVariant::FullClass => (hf * sd, hf),
            FqiVariant::Representation { radius } => (radius.unwrap_or(hf * sd), hf),
            FqiVariant::Elliptical => (sd, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FqiSolution {
    pub policy: Policy,
    /// Unclipped `f_h(x, a) = R_h + <phi, w>`, indexed `x * K + a`.
    pub q: Vec<Vec<f64>>,
    /// `V_h(x) = clip(max_a f_h(x, a))`.
    pub values: Vec<Vec<f64>>,
    /// Index of the selected feature per level.
    pub chosen: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
}

fn check_reward(ctx: &PlanningContext, reward: &RewardFunction) -> Result<()> {
    ctx.require(reward.horizon())?;
    for h in 0..reward.horizon() {
        let pairs = ctx.stats(h).pair_weights().len();
        if reward.table(h).len() != pairs {
            return Err(Error::ShapeMismatch(format!(
                "reward level {h} has the wrong size"
            )));
        }
    }
    Ok(())
}

/// Regress `next` on every candidate at level `h` and keep the minimiser
/// (lowest index on ties). Returns `(index, w, loss)`.
fn best_fit(ctx: &PlanningContext, h: usize, next: &[f64], radius: f64) -> (usize, Vec<f64>, f64) {
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for i in 0..ctx.class(h).len() {
        let sol = ctx.feature_stats(h, i).fit(ctx.stats(h), next, radius);
        if best.as_ref().is_none_or(|b| sol.loss < b.2) {
            best = Some((i, sol.w.iter().copied().collect(), sol.loss));
        }
    }
    best.expect("class is non-empty")
}

fn q_table(ctx: &PlanningContext, h: usize, i: usize, w: &[f64], reward: &[f64]) -> Vec<f64> {
    let phi = &ctx.class(h)[i];
    (0..reward.len())
        .map(|p| reward[p] + phi.row(p).iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Fitted Q-iteration over the reward's levels.
///
/// The regression target at level `h` is `V_{h+1}(x')`; the reward only
/// offsets the fitted function, so `f_h = R_h + <phi, w>`.
pub fn fqi(
    ctx: &PlanningContext,
    reward: &RewardFunction,
    variant: FqiVariant,
) -> Result<FqiSolution> {
    check_reward(ctx, reward)?;
    let levels = reward.horizon();
    let k = reward.num_actions();
    let mut next = vec![0.0; ctx.stats(levels - 1).next_states()];
    let mut q = vec![Vec::new(); levels];
    let mut values = vec![Vec::new(); levels];
    let mut chosen = vec![0; levels];
    let mut weights = vec![Vec::new(); levels];
    let mut losses = vec![0.0; levels];
    for h in (0..levels).rev() {
        let d = ctx.class(h)[0].dim();
        let (radius, hi) = variant.radius_and_clip(levels, d);
        let (i, w, loss) = best_fit(ctx, h, &next, radius);
        let table = q_table(ctx, h, i, &w, reward.table(h));
        let v: Vec<f64> = table
            .chunks(k)
            .map(|row| {
                clip(
                    row.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    0.0,
                    hi,
                )
            })
            .collect();
        next = v.clone();
        q[h] = table;
        values[h] = v;
        chosen[h] = i;
        weights[h] = w;
        losses[h] = loss;
    }
    Ok(FqiSolution {
        policy: greedy_policy_from_q(k, &q)?,
        q,
        values,
        chosen,
        weights,
        losses,
    })
}

#[derive(Debug, Clone)]
pub struct FqeSolution {
    /// `sum_x init(x) V_0(x)`.
    pub value: f64,
    pub values: Vec<Vec<f64>>,
}

/// Fitted Q-evaluation with the elliptical class (`||w|| <= sqrt(d)`,
/// values clipped to `[0, 1]`).
///
/// `V_h(x) = clip(E_{a ~ pi(x)} f_h(x, a))`; the estimate is averaged over
/// the initial distribution `init`.
pub fn fqe<B: Behavior + ?Sized>(
    ctx: &PlanningContext,
    reward: &RewardFunction,
    policy: &B,
    init: &[f64],
) -> Result<FqeSolution> {
    check_reward(ctx, reward)?;
    let levels = reward.horizon();
    if policy.covered_levels() < levels {
        return Err(Error::PolicyHorizonMismatch {
            needed: levels,
            covered: policy.covered_levels(),
        });
    }
    let k = reward.num_actions();
    let mut next = vec![0.0; ctx.stats(levels - 1).next_states()];
    let mut values = vec![Vec::new(); levels];
    let mut probs = vec![0.0; k];
    let members = policy.members();
    for h in (0..levels).rev() {
        let d = ctx.class(h)[0].dim();
        let (radius, hi) = FqiVariant::Elliptical.radius_and_clip(levels, d);
        let (i, w, _) = best_fit(ctx, h, &next, radius);
        let table = q_table(ctx, h, i, &w, reward.table(h));
        let v: Vec<f64> = table
            .chunks(k)
            .enumerate()
            .map(|(x, row)| {
                let mut total = 0.0;
                for m in 0..members {
                    policy.action_probs(m, h, x, &mut probs);
                    total += row.iter().zip(&probs).map(|(q, p)| q * p).sum::<f64>();
                }
                clip(total / members as f64, 0.0, hi)
            })
            .collect();
        next = v.clone();
        values[h] = v;
    }
    if init.len() != values[0].len() {
        return Err(Error::ShapeMismatch(
            "initial distribution does not match X_0".into(),
        ));
    }
    Ok(FqeSolution {
        value: init.iter().zip(&values[0]).map(|(p, v)| p * v).sum(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_spaces::FeatureMap;
    use crate::mdp::test_envs::{chain, random_mdp};
    use crate::mdp::{
        collect_dataset, exact_policy_value, value_iteration, MixturePolicy, PolicyLevel,
    };
    use crate::rng::RngStream;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star_classes(mdp: &crate::mdp::LatentLowRankMDP) -> Vec<Vec<FeatureMap>> {
        (0..mdp.horizon())
            .map(|h| vec![FeatureMap::phi_star(mdp, h)])
            .collect()
    }

    fn random_reward(rng: &mut ChaCha8Rng, mdp: &crate::mdp::LatentLowRankMDP) -> RewardFunction {
        let tables = (0..mdp.horizon())
            .map(|h| {
                (0..mdp.num_states(h) * mdp.num_actions())
                    .map(|_| rng.random())
                    .collect()
            })
            .collect();
        RewardFunction::new(mdp.num_actions(), tables, "r").unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_weights_and_action_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(&mut rng, 3, 2, 4, 3);
        let classes = star_classes(&mdp);
        let ctx =
            PlanningContext::exact(&mdp, classes.iter().map(Vec::as_slice).collect()).unwrap();
        let sol = fqi(&ctx, &RewardFunction::zero(&mdp, 3), FqiVariant::FullClass).unwrap();
        assert!(sol.weights.iter().flatten().all(|w| *w == 0.0));
        for h in 0..3 {
            for x in 0..4 {
                assert_eq!(sol.policy.action(h, x), Some(0));
            }
        }
        let v = fqe(
            &ctx,
            &RewardFunction::zero(&mdp, 3),
            &sol.policy,
            mdp.init(),
        )
        .unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn exact_mode_reproduces_value_iteration() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = random_mdp(&mut rng, 3, 2, 5, 3);
            let r = random_reward(&mut rng, &mdp);
            let classes = star_classes(&mdp);
            let ctx =
                PlanningContext::exact(&mdp, classes.iter().map(Vec::as_slice).collect()).unwrap();
            let sol = fqi(&ctx, &r, FqiVariant::FullClass).unwrap();
            let opt = value_iteration(&mdp, &r).unwrap();
            let v = exact_policy_value(&mdp, &sol.policy, &r).unwrap();
            assert!((v - opt.value).abs() < 1e-8, "{v} vs {}", opt.value);
            for h in 0..3 {
                for (a, b) in sol.q[h].iter().zip(&opt.q[h]) {
                    assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn fqe_on_single_path() {
        let mdp = chain(3, 2);
        let classes = star_classes(&mdp);
        let ds: Vec<_> = (0..3)
            .map(|h| {
                collect_dataset(
                    &mdp,
                    &MixturePolicy::uniform(2, 3),
                    h,
                    100,
                    &RngStream::new(h as u64),
                    "u",
                )
                .unwrap()
            })
            .collect();
        let ctx =
            PlanningContext::from_datasets(&mdp, &ds, classes.iter().map(Vec::as_slice).collect())
                .unwrap();
        let r = RewardFunction::terminal(&mdp, 2, vec![0.3, 0.7], "t").unwrap();
        let p = Policy::deterministic(2, vec![vec![0]; 3]).unwrap();
        let v = fqe(&ctx, &r, &p, mdp.init()).unwrap();
        assert!((v.value - 0.3).abs() < 0.02);
    }

    #[test]
    fn fqe_matches_exact_value_on_sampled_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdp = random_mdp(&mut rng, 3, 2, 6, 3);
        let classes = star_classes(&mdp);
        let u = MixturePolicy::uniform(2, 3);
        let ds: Vec<_> = (0..3)
            .map(|h| {
                collect_dataset(&mdp, &u, h, 5000, &RngStream::new(100 + h as u64), "u").unwrap()
            })
            .collect();
        let ctx =
            PlanningContext::from_datasets(&mdp, &ds, classes.iter().map(Vec::as_slice).collect())
                .unwrap();
        let table: Vec<f64> = (0..12).map(|_| rng.random()).collect();
        let r = RewardFunction::terminal(&mdp, 2, table, "t").unwrap();
        let levels = (0..3)
            .map(|_| PolicyLevel::Deterministic((0..6).map(|_| rng.random_range(0..2)).collect()))
            .collect();
        let p = Policy::new(2, levels).unwrap();
        let est = fqe(&ctx, &r, &p, mdp.init()).unwrap().value;
        let exact = exact_policy_value(&mdp, &p, &r).unwrap();
        assert!((est - exact).abs() <= 0.05, "{est} vs {exact}");
    }

    #[test]
    fn missing_levels_are_reported() {
        let mdp = chain(3, 2);
        let classes = star_classes(&mdp);
        let ctx =
            PlanningContext::exact(&mdp, classes[..2].iter().map(Vec::as_slice).collect()).unwrap();
        assert!(matches!(
            fqi(&ctx, &RewardFunction::zero(&mdp, 3), FqiVariant::FullClass),
            Err(Error::MissingLevelData { .. })
        ));
    }
}
