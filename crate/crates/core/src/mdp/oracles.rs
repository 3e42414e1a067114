//! Dynamic-programming oracles: exact occupancies, Bellman backups,
//! optimal values and policy values.

use super::{Behavior, LatentLowRankMDP, Policy, PolicyLevel};
use crate::error::{Error, Result};
use crate::function_spaces::RewardFunction;

/// Forward pass for one member; calls `visit(h, occupancy over X_h x A)` for
/// `h` in `0..levels`.
fn forward<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    member: usize,
    levels: usize,
    mut visit: impl FnMut(usize, &[f64]),
) {
    let k = mdp.num_actions();
    let mut dist = mdp.init().to_vec();
    let mut probs = vec![0.0; k];
    for h in 0..levels {
        let nx = mdp.num_states(h);
        let mut occ = vec![0.0; nx * k];
        for x in 0..nx {
            if dist[x] == 0.0 {
                continue;
            }
            behavior.action_probs(member, h, x, &mut probs);
            for a in 0..k {
                occ[x * k + a] = dist[x] * probs[a];
            }
        }
        visit(h, &occ);
        if h + 1 < levels {
            let nn = mdp.num_states(h + 1);
            let mut next = vec![0.0; nn];
            for x in 0..nx {
                for a in 0..k {
                    let w = occ[x * k + a];
                    if w == 0.0 {
                        continue;
                    }
                    for (n, t) in next.iter_mut().zip(mdp.transition_row(h, x, a)) {
                        *n += w * t;
                    }
                }
            }
            dist = next;
        }
    }
}

fn require_cover<B: Behavior + ?Sized>(behavior: &B, levels: usize) -> Result<()> {
    if behavior.covered_levels() < levels {
        return Err(Error::PolicyHorizonMismatch {
            needed: levels,
            covered: behavior.covered_levels(),
        });
    }
    Ok(())
}

/// Exact distribution of `(x_h, a_h)`, indexed `x * K + a`.
pub fn exact_state_action_occupancy<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    h: usize,
) -> Result<Vec<f64>> {
    if h >= mdp.horizon() {
        return Err(Error::LevelMismatch {
            expected: mdp.horizon() - 1,
            found: h,
        });
    }
    require_cover(behavior, h + 1)?;
    let m = behavior.members();
    let mut total = vec![0.0; mdp.num_states(h) * mdp.num_actions()];
    for member in 0..m {
        forward(mdp, behavior, member, h + 1, |level, occ| {
            if level == h {
                for (t, o) in total.iter_mut().zip(occ) {
                    *t += o / m as f64;
                }
            }
        });
    }
    Ok(total)
}

/// Exact distribution of `x_h` for `h` in `0..=H`.
pub fn exact_state_occupancy<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    h: usize,
) -> Result<Vec<f64>> {
    if h == 0 {
        return Ok(mdp.init().to_vec());
    }
    let occ = exact_state_action_occupancy(mdp, behavior, h - 1)?;
    let k = mdp.num_actions();
    let mut dist = vec![0.0; mdp.num_states(h)];
    for x in 0..mdp.num_states(h - 1) {
        for a in 0..k {
            for (d, t) in dist.iter_mut().zip(mdp.transition_row(h - 1, x, a)) {
                *d += occ[x * k + a] * t;
            }
        }
    }
    Ok(dist)
}

/// Exact distribution of `z_level` (`level` in `1..=H`), pushed through
/// `psi_{level-1}`.
pub fn exact_latent_occupancy<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    level: usize,
) -> Result<Vec<f64>> {
    if level == 0 || level > mdp.horizon() {
        return Err(Error::LevelMismatch {
            expected: mdp.horizon(),
            found: level,
        });
    }
    let h = level - 1;
    let occ = exact_state_action_occupancy(mdp, behavior, h)?;
    let k = mdp.num_actions();
    let mut dist = vec![0.0; mdp.dim()];
    for x in 0..mdp.num_states(h) {
        for a in 0..k {
            for (d, p) in dist.iter_mut().zip(mdp.phi_star(h, x, a)) {
                *d += occ[x * k + a] * p;
            }
        }
    }
    Ok(dist)
}

/// `E[f(x_{h+1}) | x_h, a_h]` for every pair, together with
/// `theta*_f = sum_x' f(x') mu*_h(x')` so that the backup equals
/// `<phi*_h(x, a), theta*_f>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Backup {
    pub values: Vec<f64>,
    pub theta: Vec<f64>,
}

pub fn exact_bellman_backup(mdp: &LatentLowRankMDP, h: usize, f: &[f64]) -> Result<Backup> {
    if h >= mdp.horizon() {
        return Err(Error::LevelMismatch {
            expected: mdp.horizon() - 1,
            found: h,
        });
    }
    if f.len() != mdp.num_states(h + 1) {
        return Err(Error::DimMismatch(format!(
            "f has {} entries, X_{} has {}",
            f.len(),
            h + 1,
            mdp.num_states(h + 1)
        )));
    }
    let k = mdp.num_actions();
    let mut values = Vec::with_capacity(mdp.num_states(h) * k);
    for x in 0..mdp.num_states(h) {
        for a in 0..k {
            values.push(
                mdp.transition_row(h, x, a)
                    .iter()
                    .zip(f)
                    .map(|(t, v)| t * v)
                    .sum(),
            );
        }
    }
    let theta = (0..mdp.dim())
        .map(|z| mdp.emission(h, z).iter().zip(f).map(|(n, v)| n * v).sum())
        .collect();
    Ok(Backup { values, theta })
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `max_pi E_pi[r(x_h, a_h)]` for a single reward table at level `h`.
pub fn max_terminal_value(mdp: &LatentLowRankMDP, h: usize, reward: &[f64]) -> f64 {
    let k = mdp.num_actions();
    let mut v: Vec<f64> = (0..mdp.num_states(h))
        .map(|x| {
            reward[x * k..(x + 1) * k]
                .iter()
                .cloned()
                .fold(f64::MIN, f64::max)
        })
        .collect();
    for level in (0..h).rev() {
        v = (0..mdp.num_states(level))
            .map(|x| {
                (0..k)
                    .map(|a| {
                        mdp.transition_row(level, x, a)
                            .iter()
                            .zip(&v)
                            .map(|(t, w)| t * w)
                            .sum::<f64>()
                    })
                    .fold(f64::MIN, f64::max)
            })
            .collect();
    }
    mdp.init().iter().zip(&v).map(|(p, w)| p * w).sum()
}

#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub policy: Policy,
    /// `v*_R = E_{x_0}[V*_0(x_0)]`.
    pub value: f64,
    /// `Q*_h`, indexed `x * K + a`.
    pub q: Vec<Vec<f64>>,
    /// `V*_h`.
    pub v: Vec<Vec<f64>>,
}

/// Backward DP over the reward's levels; ties go to the lowest action id.
pub fn value_iteration(mdp: &LatentLowRankMDP, reward: &RewardFunction) -> Result<OptimalSolution> {
    let levels = reward.horizon();
    check_reward(mdp, reward)?;
    let k = mdp.num_actions();
    let mut q = vec![Vec::new(); levels];
    let mut v = vec![Vec::new(); levels];
    let mut tables = vec![Vec::new(); levels];
    let mut next: Vec<f64> = vec![0.0; mdp.num_states(levels)];
    for h in (0..levels).rev() {
        let nx = mdp.num_states(h);
        let mut qh = Vec::with_capacity(nx * k);
        for x in 0..nx {
            for a in 0..k {
                let cont: f64 = mdp
                    .transition_row(h, x, a)
                    .iter()
                    .zip(&next)
                    .map(|(t, w)| t * w)
                    .sum();
                qh.push(reward.value(h, x, a) + cont);
            }
        }
        let actions: Vec<usize> = (0..nx)
            .map(|x| argmax_lowest(&qh[x * k..(x + 1) * k]))
            .collect();
        let vh: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(x, &a)| qh[x * k + a])
            .collect();
        next = vh.clone();
        q[h] = qh;
        v[h] = vh;
        tables[h] = actions;
    }
    let value = if levels == 0 {
        0.0
    } else {
        mdp.init().iter().zip(&v[0]).map(|(p, w)| p * w).sum()
    };
    Ok(OptimalSolution {
        policy: Policy::new(
            k,
            tables.into_iter().map(PolicyLevel::Deterministic).collect(),
        )?,
        value,
        q,
        v,
    })
}

fn check_reward(mdp: &LatentLowRankMDP, reward: &RewardFunction) -> Result<()> {
    if reward.horizon() > mdp.horizon() {
        return Err(Error::ShapeMismatch(format!(
            "reward has {} levels, environment {}",
            reward.horizon(),
            mdp.horizon()
        )));
    }
    for h in 0..reward.horizon() {
        if reward.table(h).len() != mdp.num_states(h) * mdp.num_actions() {
            return Err(Error::ShapeMismatch(format!(
                "reward table {h} has the wrong size"
            )));
        }
    }
    Ok(())
}

/// `v_R^pi`: expected sum of rewards over the reward's levels.
pub fn exact_policy_value<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    reward: &RewardFunction,
) -> Result<f64> {
    check_reward(mdp, reward)?;
    let levels = reward.horizon();
    require_cover(behavior, levels)?;
    let m = behavior.members();
    let mut total = 0.0;
    for member in 0..m {
        forward(mdp, behavior, member, levels, |h, occ| {
            total += occ
                .iter()
                .zip(reward.table(h))
                .map(|(o, r)| o * r)
                .sum::<f64>()
                / m as f64;
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::test_envs::{chain, random_mdp};
    use crate::mdp::{sample_episode, MixturePolicy};
    use crate::rng::RngStream;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_reward(rng: &mut ChaCha8Rng, mdp: &LatentLowRankMDP) -> RewardFunction {
        let tables = (0..mdp.horizon())
            .map(|h| {
                (0..mdp.num_states(h) * mdp.num_actions())
                    .map(|_| rng.random::<f64>())
                    .collect()
            })
            .collect();
        RewardFunction::new(mdp.num_actions(), tables, "r").unwrap()
    }

    fn random_policy(rng: &mut ChaCha8Rng, mdp: &LatentLowRankMDP) -> Policy {
        let k = mdp.num_actions();
        let levels = (0..mdp.horizon())
            .map(|h| {
                PolicyLevel::Stochastic(
                    (0..mdp.num_states(h))
                        .map(|_| {
                            let raw: Vec<f64> =
                                (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
                            let s: f64 = raw.iter().sum();
                            raw.iter().map(|v| v / s).collect()
                        })
                        .collect(),
                )
            })
            .collect();
        Policy::new(k, levels).unwrap()
    }

    #[test]
    fn occupancy_at_level_zero_is_init_times_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(&mut rng, 2, 3, 4, 2);
        let p = random_policy(&mut rng, &mdp);
        let occ = exact_state_action_occupancy(&mdp, &p, 0).unwrap();
        let mut probs = [0.0; 3];
        for x in 0..4 {
            p.action_probs(0, 0, x, &mut probs);
            for a in 0..3 {
                assert!((occ[x * 3 + a] - mdp.init()[x] * probs[a]).abs() < 1e-15);
            }
        }
        assert!((occ.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_transitions_give_uniform_occupancy() {
        let nu = vec![vec![vec![0.25; 4]]; 2];
        let psi = vec![vec![vec![vec![1.0]; 2]; 4]; 2];
        let mdp = LatentLowRankMDP::build_from_latent(&psi, &nu, &[0.25; 4], 2, 2).unwrap();
        let occ = exact_state_action_occupancy(&mdp, &MixturePolicy::uniform(2, 2), 1).unwrap();
        assert!(occ.iter().all(|o| (o - 0.125).abs() < 1e-15));
    }

    #[test]
    fn latent_occupancy_edge_cases() {
        let mdp = chain(2, 2);
        assert_eq!(
            exact_latent_occupancy(&mdp, &MixturePolicy::uniform(2, 2), 1).unwrap(),
            vec![1.0]
        );
        let psi = vec![vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]; 2]];
        let nu = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]];
        let mdp = LatentLowRankMDP::build_from_latent(&psi, &nu, &[0.3, 0.7], 1, 2).unwrap();
        let p = Policy::deterministic(2, vec![vec![1, 0]]).unwrap();
        assert_eq!(exact_latent_occupancy(&mdp, &p, 1).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn mixture_occupancy_is_pushed_forward_by_uniform_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mdp = random_mdp(&mut rng, 4, 2, 3, 2);
        let members = vec![random_policy(&mut rng, &mdp), random_policy(&mut rng, &mdp)];
        let rho = MixturePolicy::new(2, members.clone(), 1, 0).unwrap();
        let rho2 = rho.with_suffix(2);
        // Push the level-1 occupancy of rho forward by uniform actions.
        let mut occ = exact_state_action_occupancy(&mdp, &rho, 1).unwrap();
        for h in 1..3 {
            let mut dist = [0.0; 3];
            for x in 0..3 {
                for a in 0..2 {
                    for (d, t) in dist.iter_mut().zip(mdp.transition_row(h, x, a)) {
                        *d += occ[x * 2 + a] * t;
                    }
                }
            }
            occ = dist.iter().flat_map(|d| [d / 2.0, d / 2.0]).collect();
        }
        let direct = exact_state_action_occupancy(&mdp, &rho2, 3).unwrap();
        for (a, b) in occ.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backup_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = random_mdp(&mut rng, 2, 2, 3, 3);
        let b = exact_bellman_backup(&mdp, 0, &[0.4; 3]).unwrap();
        assert!(b.values.iter().all(|v| (v - 0.4).abs() < 1e-14));
        let sum_mu: Vec<f64> = (0..3)
            .map(|z| (0..3).map(|x| mdp.mu_star(0, x)[z]).sum::<f64>())
            .collect();
        for (t, s) in b.theta.iter().zip(&sum_mu) {
            assert!((t - 0.4 * s).abs() < 1e-14);
        }
        // Deterministic successor.
        let psi = vec![vec![vec![vec![1.0, 0.0]; 2]]];
        let nu = vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]];
        let mdp = LatentLowRankMDP::build_from_latent(&psi, &nu, &[1.0], 1, 2).unwrap();
        let b = exact_bellman_backup(&mdp, 0, &[0.0, 1.0]).unwrap();
        assert_eq!(b.values, vec![1.0, 1.0]);
        assert!(exact_bellman_backup(&mdp, 0, &[1.0]).is_err());
    }

    #[test]
    fn value_iteration_trivial_cases() {
        let mdp = chain(3, 2);
        let r = RewardFunction::new(2, vec![vec![1.0, 0.0]; 3], "a0").unwrap();
        let sol = value_iteration(&mdp, &r).unwrap();
        assert_eq!(sol.value, 3.0);
        for h in 0..3 {
            assert_eq!(sol.policy.action(h, 0), Some(0));
        }
        let zero = RewardFunction::zero(&mdp, 3);
        let sol = value_iteration(&mdp, &zero).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.policy.action(1, 0), Some(0));
        assert_eq!(
            exact_policy_value(&mdp, &MixturePolicy::uniform(2, 3), &zero).unwrap(),
            0.0
        );
    }

    #[test]
    fn value_iteration_matches_policy_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mdp = random_mdp(&mut rng, 2, 2, 3, 2);
        let r = random_reward(&mut rng, &mdp);
        let sol = value_iteration(&mdp, &r).unwrap();
        // 2 levels x 3 states x 2 actions -> 2^6 deterministic policies.
        let mut best = f64::MIN;
        for code in 0..64u32 {
            let tables: Vec<Vec<usize>> = (0..2)
                .map(|h| {
                    (0..3)
                        .map(|x| ((code >> (h * 3 + x)) & 1) as usize)
                        .collect()
                })
                .collect();
            let p = Policy::deterministic(2, tables).unwrap();
            best = best.max(exact_policy_value(&mdp, &p, &r).unwrap());
        }
        assert!((sol.value - best).abs() < 1e-12);
        assert!((exact_policy_value(&mdp, &sol.policy, &r).unwrap() - sol.value).abs() < 1e-12);
    }

    #[test]
    fn random_policies_never_beat_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = random_mdp(&mut rng, 3, 3, 4, 2);
        let r = random_reward(&mut rng, &mdp);
        let v_star = value_iteration(&mdp, &r).unwrap().value;
        for _ in 0..50 {
            let p = random_policy(&mut rng, &mdp);
            assert!(exact_policy_value(&mdp, &p, &r).unwrap() <= v_star + 1e-12);
        }
    }

    #[test]
    fn policy_value_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mdp = random_mdp(&mut rng, 2, 2, 3, 2);
        let r = random_reward(&mut rng, &mdp);
        let p = random_policy(&mut rng, &mdp);
        let exact = exact_policy_value(&mdp, &p, &r).unwrap();
        let n = 200_000;
        let s = RngStream::new(3);
        let (mut sum, mut sq) = (0.0, 0.0);
        for i in 0..n {
            let t = sample_episode(&mdp, &p, &s.derive(i)).unwrap();
            let g: f64 = (0..2).map(|h| r.value(h, t.states[h], t.actions[h])).sum();
            sum += g;
            sq += g * g;
        }
        let mean = sum / n as f64;
        let sd = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * sd, "{mean} vs {exact}");
    }

    #[test]
    fn reward_range_is_checked() {
        assert!(matches!(
            RewardFunction::new(1, vec![vec![1.5]], "bad"),
            Err(Error::RewardOutOfRange { .. })
        ));
    }
}
