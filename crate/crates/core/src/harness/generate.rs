//! Random environments, feature classes and reward classes.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_spaces::{FeatureClass, FeatureMap, RewardFunction};
use crate::mdp::LatentLowRankMDP;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub horizon: usize,
    pub actions: usize,
    /// `|X_h|` for every level.
    pub states: usize,
    pub latents: usize,
    /// Reject draws whose exact `eta_min` is below this.
    pub eta_floor: f64,
    /// Dirichlet concentration of the mixing and emission tables.
    pub alpha: f64,
    /// Mix uniformly into the latents instead of drawing `psi`.
    pub uniform_psi: bool,
    pub max_attempts: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            horizon: 3,
            actions: 2,
            states: 12,
            latents: 3,
            eta_floor: 0.05,
            alpha: 1.0,
            uniform_psi: false,
            max_attempts: 1000,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.actions == 0 || self.states == 0 || self.latents == 0 {
            return Err(Error::InvalidConfig(
                "environment sizes must be positive".into(),
            ));
        }
        if !(self.alpha > 0.0) || self.max_attempts == 0 {
            return Err(Error::InvalidConfig(
                "alpha and max_attempts must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha is positive");
    loop {
        let raw: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let s: f64 = raw.iter().sum();
        if s > 0.0 {
            return raw.into_iter().map(|v| v / s).collect();
        }
    }
}

fn draw_env(rng: &mut ChaCha8Rng, p: &EnvParams) -> Result<LatentLowRankMDP> {
    let psi: Vec<Vec<Vec<Vec<f64>>>> = (0..p.horizon)
        .map(|_| {
            (0..p.states)
                .map(|_| {
                    (0..p.actions)
                        .map(|_| {
                            if p.uniform_psi {
                                vec![1.0 / p.latents as f64; p.latents]
                            } else {
                                dirichlet(rng, p.latents, p.alpha)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let nu: Vec<Vec<Vec<f64>>> = (0..p.horizon)
        .map(|_| {
            (0..p.latents)
                .map(|_| dirichlet(rng, p.states, p.alpha))
                .collect()
        })
        .collect();
    let init = dirichlet(rng, p.states, p.alpha);
    LatentLowRankMDP::build_from_latent(&psi, &nu, &init, p.horizon, p.actions)
}

/// Rejection-samples environments until the exact `eta_min` reaches the
/// floor. Attempt `i` draws from item `i` of `stream`.
pub fn generate_env(params: &EnvParams, stream: &RngStream) -> Result<LatentLowRankMDP> {
    params.validate()?;
    for attempt in 0..params.max_attempts {
        let mdp = draw_env(&mut stream.item(attempt as u64), params)?;
        if mdp.eta_min() >= params.eta_floor - 1e-12 {
            return Ok(mdp);
        }
    }
    Err(Error::GenerationFailed {
        attempts: params.max_attempts,
        floor: params.eta_floor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyKind {
    /// A fixed non-identity permutation of the coordinates of `phi*`.
    Permutation,
    /// Independent random points of the simplex.
    RandomSimplex,
    /// `(1 - s) phi* + s q` with random simplex rows `q`.
    Noisy,
}

impl std::str::FromStr for DecoyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "permutation" => Ok(DecoyKind::Permutation),
            "random_simplex" => Ok(DecoyKind::RandomSimplex),
            "noisy" => Ok(DecoyKind::Noisy),
            other => Err(Error::InvalidConfig(format!(
                "unknown decoy kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub decoys: usize,
    /// Decoys cycle through these kinds.
    pub kinds: Vec<DecoyKind>,
    /// Mixing weight `s` of noisy decoys.
    pub noise: f64,
    /// Shuffle `phi*` into a random position of each level's list.
    pub shuffle: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            decoys: 3,
            kinds: vec![
                DecoyKind::Permutation,
                DecoyKind::RandomSimplex,
                DecoyKind::Noisy,
            ],
            noise: 0.5,
            shuffle: false,
        }
    }
}

/// Minimum sup-distance between a noisy decoy and `phi*`.
pub const NOISY_MIN_DISTANCE: f64 = 0.05;

fn random_derangement(rng: &mut ChaCha8Rng, d: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..d).collect();
    if d < 2 {
        return perm;
    }
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().any(|(i, &p)| i != p) {
            return perm;
        }
    }
}

fn decoy(
    rng: &mut ChaCha8Rng,
    star: &FeatureMap,
    kind: DecoyKind,
    noise: f64,
    index: usize,
) -> Result<FeatureMap> {
    let d = star.dim();
    let pairs = star.num_states() * star.num_actions();
    let values: Vec<f64> = match kind {
        DecoyKind::Permutation => {
            let perm = random_derangement(rng, d);
            (0..pairs)
                .flat_map(|p| {
                    let row = star.row(p);
                    perm.iter().map(move |&j| row[j]).collect::<Vec<_>>()
                })
                .collect()
        }
        DecoyKind::RandomSimplex => (0..pairs).flat_map(|_| dirichlet(rng, d, 1.0)).collect(),
        DecoyKind::Noisy => loop {
            let v: Vec<f64> = (0..pairs)
                .flat_map(|p| {
                    let q = dirichlet(rng, d, 1.0);
                    star.row(p)
                        .iter()
                        .zip(q)
                        .map(|(s, q)| (1.0 - noise) * s + noise * q)
                        .collect::<Vec<_>>()
                })
                .collect();
            let dist = v
                .iter()
                .zip(star.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dist > NOISY_MIN_DISTANCE {
                break v;
            }
        },
    };
    let label = format!(
        "{}_{index}",
        match kind {
            DecoyKind::Permutation => "permutation",
            DecoyKind::RandomSimplex => "random_simplex",
            DecoyKind::Noisy => "noisy",
        }
    );
    FeatureMap::new(
        star.level(),
        star.num_states(),
        star.num_actions(),
        d,
        values,
        label,
    )
}

/// `Phi_h = {phi*_h} ∪ decoys` at every level, with the position of `phi*`
/// recorded in the class.
pub fn generate_feature_class(
    mdp: &LatentLowRankMDP,
    params: &FeatureParams,
    stream: &RngStream,
) -> Result<FeatureClass> {
    if params.decoys > 0 && params.kinds.is_empty() {
        return Err(Error::InvalidConfig("decoy kinds must not be empty".into()));
    }
    if !(params.noise > 0.0 && params.noise <= 1.0) {
        return Err(Error::InvalidConfig("noise must lie in (0, 1]".into()));
    }
    let mut levels = Vec::with_capacity(mdp.horizon());
    let mut star_idx = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let mut rng = stream.item(h as u64);
        let star = FeatureMap::phi_star(mdp, h);
        let mut list = Vec::with_capacity(params.decoys + 1);
        for i in 0..params.decoys {
            let kind = params.kinds[i % params.kinds.len()];
            list.push(decoy(&mut rng, &star, kind, params.noise, i)?);
        }
        let pos = if params.shuffle {
            rng.random_range(0..=list.len())
        } else {
            0
        };
        list.insert(pos, star);
        levels.push(list);
        star_idx.push(pos);
    }
    FeatureClass::new(levels)?.with_star_indices(star_idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub count: usize,
    /// Probability that an entry is nonzero.
    pub density: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            count: 3,
            density: 0.5,
        }
    }
}

/// Rewards `U[0, 1] * Bernoulli(density)`, one stream item per reward.
pub fn generate_rewards(
    mdp: &LatentLowRankMDP,
    params: &RewardParams,
    stream: &RngStream,
) -> Result<Vec<RewardFunction>> {
    if !(0.0..=1.0).contains(&params.density) {
        return Err(Error::InvalidConfig(
            "reward density must lie in [0, 1]".into(),
        ));
    }
    (0..params.count)
        .map(|r| {
            let mut rng = stream.item(r as u64);
            let tables = (0..mdp.horizon())
                .map(|h| {
                    (0..mdp.num_states(h) * mdp.num_actions())
                        .map(|_| {
                            let u: f64 = rng.random();
                            if rng.random_bool(params.density) {
                                u
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            RewardFunction::new(mdp.num_actions(), tables, format!("reward_{r}"))
        })
        .collect()
}
