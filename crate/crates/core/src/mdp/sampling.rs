use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Behavior, LatentLowRankMDP, Provenance, Transition, TransitionDataset};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// `(x_0, a_0, ..., x_{H-1}, a_{H-1}, x_H)` plus the latents `z_1..z_H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub latents: Vec<usize>,
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding: fall back to the last index with positive mass.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Rolls out levels `0..=last` and stops after drawing `x_{last+1}`.
fn rollout<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    last: usize,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let member = if behavior.members() > 1 {
        rng.random_range(0..behavior.members())
    } else {
        0
    };
    let mut probs = vec![0.0; mdp.num_actions()];
    let mut x = draw(rng, mdp.init());
    let mut traj = Trajectory {
        states: vec![x],
        actions: Vec::with_capacity(last + 1),
        latents: Vec::with_capacity(last + 1),
    };
    for h in 0..=last {
        behavior.action_probs(member, h, x, &mut probs);
        let a = draw(rng, &probs);
        let z = draw(rng, mdp.phi_star(h, x, a));
        x = draw(rng, mdp.emission(h, z));
        traj.actions.push(a);
        traj.latents.push(z);
        traj.states.push(x);
    }
    traj
}

pub fn sample_episode<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    stream: &RngStream,
) -> Result<Trajectory> {
    if behavior.covered_levels() < mdp.horizon() {
        return Err(Error::PolicyHorizonMismatch {
            needed: mdp.horizon(),
            covered: behavior.covered_levels(),
        });
    }
    Ok(rollout(mdp, behavior, mdp.horizon() - 1, &mut stream.rng()))
}

/// `n` i.i.d. tuples `(x_h, a_h, x_{h+1})`, one fresh episode per tuple.
/// Episode `i` uses item `i` of the stream.
pub fn collect_dataset<B: Behavior + ?Sized>(
    mdp: &LatentLowRankMDP,
    behavior: &B,
    level: usize,
    n: usize,
    stream: &RngStream,
    label: &str,
) -> Result<TransitionDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if level >= mdp.horizon() {
        return Err(Error::LevelMismatch {
            expected: mdp.horizon() - 1,
            found: level,
        });
    }
    if behavior.covered_levels() <= level {
        return Err(Error::PolicyHorizonMismatch {
            needed: level + 1,
            covered: behavior.covered_levels(),
        });
    }
    let tuples = (0..n as u64)
        .map(|i| {
            let traj = rollout(mdp, behavior, level, &mut stream.item(i));
            Transition {
                x: traj.states[level],
                a: traj.actions[level],
                x_next: traj.states[level + 1],
            }
        })
        .collect();
    Ok(TransitionDataset::new(
        level,
        tuples,
        Provenance {
            policy: label.to_string(),
            seed: stream.seed,
            stream: stream.stream,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::test_envs::{chain, random_mdp};
    use crate::mdp::{exact_latent_occupancy, exact_state_action_occupancy, MixturePolicy, Policy};
    use rand::SeedableRng;

    fn three_sigma(p: f64, n: usize) -> f64 {
        3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-9
    }

    #[test]
    fn chain_has_unique_path() {
        let mdp = chain(4, 2);
        let p = Policy::deterministic(2, vec![vec![1]; 4]).unwrap();
        let t = sample_episode(&mdp, &p, &RngStream::new(1)).unwrap();
        assert_eq!(t.states, vec![0; 5]);
        assert_eq!(t.actions, vec![1; 4]);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = random_mdp(&mut rng, 3, 2, 4, 2);
        let u = MixturePolicy::uniform(2, 3);
        let s = RngStream::new(9);
        assert_eq!(
            sample_episode(&mdp, &u, &s).unwrap(),
            sample_episode(&mdp, &u, &s).unwrap()
        );
        let d1 = collect_dataset(&mdp, &u, 1, 50, &s, "u").unwrap();
        let d2 = collect_dataset(&mdp, &u, 1, 50, &s, "u").unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn errors() {
        let mdp = chain(3, 2);
        let short = MixturePolicy::uniform(2, 2);
        assert!(matches!(
            sample_episode(&mdp, &short, &RngStream::new(0)),
            Err(Error::PolicyHorizonMismatch { .. })
        ));
        assert!(matches!(
            collect_dataset(&mdp, &short, 0, 0, &RngStream::new(0), ""),
            Err(Error::EmptyDataset)
        ));
        assert!(collect_dataset(&mdp, &short, 2, 5, &RngStream::new(0), "").is_err());
    }

    #[test]
    fn deterministic_chain_tuples_identical() {
        let mdp = chain(2, 2);
        let p = Policy::deterministic(2, vec![vec![0]; 2]).unwrap();
        let d = collect_dataset(&mdp, &p, 1, 20, &RngStream::new(4), "p").unwrap();
        assert!(d.tuples().iter().all(|t| *t == d.tuples()[0]));
    }

    #[test]
    fn uniform_frequencies_match_exact_occupancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mdp = random_mdp(&mut rng, 2, 2, 2, 2);
        let u = MixturePolicy::uniform(2, 2);
        let n = 100_000;
        let d = collect_dataset(&mdp, &u, 1, n, &RngStream::new(8), "u").unwrap();
        let occ = exact_state_action_occupancy(&mdp, &u, 1).unwrap();
        let mut counts = vec![0usize; occ.len()];
        for t in d.tuples() {
            counts[t.x * 2 + t.a] += 1;
        }
        for (c, p) in counts.iter().zip(&occ) {
            let freq = *c as f64 / n as f64;
            assert!((freq - p).abs() <= three_sigma(*p, n), "{freq} vs {p}");
        }
    }

    #[test]
    fn recorded_latents_match_exact_latent_occupancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mdp = random_mdp(&mut rng, 3, 2, 3, 3);
        let p = Policy::uniform(2, &[3, 3, 3]);
        let n = 100_000;
        let s = RngStream::new(77);
        let mut counts = [0usize; 3];
        for i in 0..n as u64 {
            let t = sample_episode(&mdp, &p, &s.derive(i)).unwrap();
            counts[t.latents[1]] += 1;
        }
        let exact = exact_latent_occupancy(&mdp, &p, 2).unwrap();
        for (c, q) in counts.iter().zip(&exact) {
            let f = *c as f64 / n as f64;
            assert!((f - q).abs() <= three_sigma(*q, n), "{f} vs {q}");
        }
    }
}
