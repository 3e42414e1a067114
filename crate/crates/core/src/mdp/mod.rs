//! Exactly-solvable episodic low-rank MDPs.
//!
//! An environment is given by a latent-variable factorisation: at level `h`
//! the pair `(x, a)` emits a latent `z ~ psi_h(.|x, a)` and the next state is
//! drawn as `x' ~ nu_h(.|z)`. The true features `phi*_h(x, a) = psi_h(.|x, a)`
//! and `mu*_h(x') = (nu_h(x'|z))_z` therefore factor the transition kernel
//! exactly, and all expectations can be computed by dynamic programming.

mod dataset;
mod oracles;
mod policy;
mod sampling;

pub use dataset::{Provenance, Transition, TransitionDataset};
pub use oracles::{
    exact_bellman_backup, exact_latent_occupancy, exact_policy_value, exact_state_action_occupancy,
    exact_state_occupancy, max_terminal_value, value_iteration, Backup, OptimalSolution,
};
pub use policy::{Behavior, MixturePolicy, Policy, PolicyLevel};
pub use sampling::{collect_dataset, sample_episode, Trajectory};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance accepted when building an environment.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentLowRankMDP {
    horizon: usize,
    actions: usize,
    /// `|X_h|` for `h = 0..=H`.
    states: Vec<usize>,
    latents: usize,
    /// `[h]`: `(|X_h| * K) x d`, row-major.
    psi: Vec<Vec<f64>>,
    /// `[h]`: `d x |X_{h+1}|`, row-major.
    nu: Vec<Vec<f64>>,
    init: Vec<f64>,
    /// `[h]`: `(|X_h| * K) x |X_{h+1}|`, row-major.
    transition: Vec<Vec<f64>>,
    eta_min: f64,
}

/// Nested-array form of an environment, used for JSON persistence.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MdpDocument {
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub actions: usize,
    pub sizes: MdpSizes,
    /// `psi[h][x][a][z]`
    pub psi: Vec<Vec<Vec<Vec<f64>>>>,
    /// `nu[h][z][x']`
    pub nu: Vec<Vec<Vec<f64>>>,
    pub init: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MdpSizes {
    pub states: Vec<usize>,
    pub latents: usize,
}

fn check_row(table: &'static str, level: usize, row: usize, values: &[f64]) -> Result<()> {
    let sum: f64 = values.iter().sum();
    if values.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NonStochasticRow {
            table,
            level,
            row,
            sum,
        });
    }
    Ok(())
}

impl LatentLowRankMDP {
    /// Builds an environment from mixing tables `psi[h][x][a][z]`, emission
    /// tables `nu[h][z][x']` and the initial distribution over `X_0`.
    ///
    /// `|X_h|` is read from the table shapes; every level must share the same
    /// latent count, which becomes the embedding dimension `d`.
    pub fn build_from_latent(
        psi: &[Vec<Vec<Vec<f64>>>],
        nu: &[Vec<Vec<f64>>],
        init: &[f64],
        horizon: usize,
        actions: usize,
    ) -> Result<Self> {
        if horizon == 0 || actions == 0 {
            return Err(Error::ShapeMismatch("H and K must be positive".into()));
        }
        if psi.len() != horizon || nu.len() != horizon {
            return Err(Error::ShapeMismatch(format!(
                "expected {horizon} psi/nu levels, got {}/{}",
                psi.len(),
                nu.len()
            )));
        }
        let latents = nu[0].len();
        if latents == 0 {
            return Err(Error::ShapeMismatch("latent set is empty".into()));
        }
        let mut states = Vec::with_capacity(horizon + 1);
        states.push(init.len());
        for level in nu.iter().take(horizon) {
            states.push(level.first().map_or(0, Vec::len));
        }
        if states.contains(&0) {
            return Err(Error::ShapeMismatch(
                "every level needs at least one state".into(),
            ));
        }
        check_row("init", 0, 0, init)?;

        let mut psi_flat = Vec::with_capacity(horizon);
        let mut nu_flat = Vec::with_capacity(horizon);
        for h in 0..horizon {
            if psi[h].len() != states[h] {
                return Err(Error::ShapeMismatch(format!(
                    "psi[{h}] has {} states, expected {}",
                    psi[h].len(),
                    states[h]
                )));
            }
            if nu[h].len() != latents {
                return Err(Error::ShapeMismatch(format!(
                    "nu[{h}] has {} latents, expected {latents}",
                    nu[h].len()
                )));
            }
            let mut table = Vec::with_capacity(states[h] * actions * latents);
            for (x, per_action) in psi[h].iter().enumerate() {
                if per_action.len() != actions {
                    return Err(Error::ShapeMismatch(format!(
                        "psi[{h}][{x}] has {} actions, expected {actions}",
                        per_action.len()
                    )));
                }
                for (a, row) in per_action.iter().enumerate() {
                    if row.len() != latents {
                        return Err(Error::ShapeMismatch(format!(
                            "psi[{h}][{x}][{a}] has length {}, expected {latents}",
                            row.len()
                        )));
                    }
                    check_row("psi", h, x * actions + a, row)?;
                    table.extend_from_slice(row);
                }
            }
            psi_flat.push(table);

            let mut table = Vec::with_capacity(latents * states[h + 1]);
            for (z, row) in nu[h].iter().enumerate() {
                if row.len() != states[h + 1] {
                    return Err(Error::ShapeMismatch(format!(
                        "nu[{h}][{z}] has length {}, expected {}",
                        row.len(),
                        states[h + 1]
                    )));
                }
                check_row("nu", h, z, row)?;
                table.extend_from_slice(row);
            }
            nu_flat.push(table);
        }

        let transition = (0..horizon)
            .map(|h| {
                let (nx, nn) = (states[h], states[h + 1]);
                let mut t = vec![0.0; nx * actions * nn];
                for pair in 0..nx * actions {
                    let phi = &psi_flat[h][pair * latents..(pair + 1) * latents];
                    for (xn, out) in t[pair * nn..(pair + 1) * nn].iter_mut().enumerate() {
                        *out = phi
                            .iter()
                            .enumerate()
                            .map(|(z, p)| p * nu_flat[h][z * nn + xn])
                            .sum();
                    }
                }
                t
            })
            .collect();

        let mut mdp = Self {
            horizon,
            actions,
            states,
            latents,
            psi: psi_flat,
            nu: nu_flat,
            init: init.to_vec(),
            transition,
            eta_min: 0.0,
        };
        mdp.eta_min = mdp.compute_eta_min();
        Ok(mdp)
    }

    pub fn from_document(doc: &MdpDocument) -> Result<Self> {
        let mdp = Self::build_from_latent(&doc.psi, &doc.nu, &doc.init, doc.horizon, doc.actions)?;
        if mdp.states != doc.sizes.states || mdp.latents != doc.sizes.latents {
            return Err(Error::ShapeMismatch(
                "declared sizes disagree with the tables".into(),
            ));
        }
        Ok(mdp)
    }

    pub fn to_document(&self) -> MdpDocument {
        let psi = (0..self.horizon)
            .map(|h| {
                (0..self.states[h])
                    .map(|x| {
                        (0..self.actions)
                            .map(|a| self.phi_star(h, x, a).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let nu = (0..self.horizon)
            .map(|h| {
                let nn = self.states[h + 1];
                (0..self.latents)
                    .map(|z| self.nu[h][z * nn..(z + 1) * nn].to_vec())
                    .collect()
            })
            .collect();
        MdpDocument {
            horizon: self.horizon,
            actions: self.actions,
            sizes: MdpSizes {
                states: self.states.clone(),
                latents: self.latents,
            },
            psi,
            nu,
            init: self.init.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    /// `|X_h|` for `h` in `0..=H`.
    pub fn num_states(&self, h: usize) -> usize {
        self.states[h]
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.states
    }

    /// Embedding dimension `d = d_LV`.
    pub fn dim(&self) -> usize {
        self.latents
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn eta_min(&self) -> f64 {
        self.eta_min
    }

    /// `phi*_h(x, a) = psi_h(.|x, a)`.
    pub fn phi_star(&self, h: usize, x: usize, a: usize) -> &[f64] {
        let d = self.latents;
        let pair = x * self.actions + a;
        &self.psi[h][pair * d..(pair + 1) * d]
    }

    /// `mu*_h(x') = (nu_h(x'|z))_z`.
    pub fn mu_star(&self, h: usize, x_next: usize) -> Vec<f64> {
        let nn = self.states[h + 1];
        (0..self.latents)
            .map(|z| self.nu[h][z * nn + x_next])
            .collect()
    }

    /// Emission row `nu_h(.|z)`.
    pub fn emission(&self, h: usize, z: usize) -> &[f64] {
        let nn = self.states[h + 1];
        &self.nu[h][z * nn..(z + 1) * nn]
    }

    /// `T_h(.|x, a)`.
    pub fn transition_row(&self, h: usize, x: usize, a: usize) -> &[f64] {
        let nn = self.states[h + 1];
        let pair = x * self.actions + a;
        &self.transition[h][pair * nn..(pair + 1) * nn]
    }

    /// `min_{h, z} max_pi P_pi[z_{h+1} = z]`, computed by one backward pass
    /// per latent with the indicator reward `psi_h(z|x, a)` at level `h`.
    fn compute_eta_min(&self) -> f64 {
        let mut eta = f64::INFINITY;
        for h in 0..self.horizon {
            for z in 0..self.latents {
                let reward: Vec<f64> = (0..self.states[h] * self.actions)
                    .map(|pair| self.psi[h][pair * self.latents + z])
                    .collect();
                eta = eta.min(max_terminal_value(self, h, &reward));
            }
        }
        eta
    }
}

#[cfg(test)]
pub(crate) mod test_envs {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n)
            .map(|_| -rng.random::<f64>().max(1e-12).ln())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    /// Random latent MDP with `states` states at every level.
    pub fn random_mdp(
        rng: &mut ChaCha8Rng,
        horizon: usize,
        actions: usize,
        states: usize,
        latents: usize,
    ) -> LatentLowRankMDP {
        let psi: Vec<Vec<Vec<Vec<f64>>>> = (0..horizon)
            .map(|_| {
                (0..states)
                    .map(|_| (0..actions).map(|_| random_simplex(rng, latents)).collect())
                    .collect()
            })
            .collect();
        let nu: Vec<Vec<Vec<f64>>> = (0..horizon)
            .map(|_| (0..latents).map(|_| random_simplex(rng, states)).collect())
            .collect();
        let init = random_simplex(rng, states);
        LatentLowRankMDP::build_from_latent(&psi, &nu, &init, horizon, actions).unwrap()
    }

    /// One state per level: every trajectory is the same path.
    pub fn chain(horizon: usize, actions: usize) -> LatentLowRankMDP {
        let psi = vec![vec![vec![vec![1.0]; actions]]; horizon];
        let nu = vec![vec![vec![1.0]]; horizon];
        LatentLowRankMDP::build_from_latent(&psi, &nu, &[1.0], horizon, actions).unwrap()
    }
}
