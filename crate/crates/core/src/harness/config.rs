//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Later assignments win, so command-line overrides are applied by
//! parsing them after the file. Every key is listed in [`KEYS`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{DecoyKind, EnvParams, FeatureParams, RewardParams};
use crate::driver::MoffleConfig;
use crate::error::{Error, Result};

/// Recognised keys with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed"),
    (
        "env.path",
        "load the environment from this JSON file instead of generating it",
    ),
    ("env.horizon", "H"),
    ("env.actions", "K"),
    ("env.states", "|X_h| at every level"),
    ("env.latents", "latent count d"),
    (
        "env.eta_floor",
        "reject environments with eta_min below this",
    ),
    ("env.alpha", "Dirichlet concentration"),
    ("env.uniform_psi", "mix uniformly into the latents"),
    ("env.max_attempts", "rejection-sampling attempts"),
    ("features.decoys", "decoys per level"),
    (
        "features.kinds",
        "comma-separated decoy kinds: permutation, random_simplex, noisy",
    ),
    ("features.noise", "mixing weight of noisy decoys"),
    ("features.shuffle", "place phi* at a random index"),
    ("rewards.count", "number of downstream rewards"),
    (
        "rewards.density",
        "probability that a reward entry is nonzero",
    ),
    (
        "moffle.eta_min",
        "reachability bound used by the formulas (default: exact)",
    ),
    ("moffle.eps", "target suboptimality"),
    ("moffle.delta", "failure probability (recorded only)"),
    ("moffle.n", "sets all four sample sizes"),
    (
        "moffle.n_phi_hat",
        "explore representation-learning samples",
    ),
    ("moffle.n_ell", "elliptical-planner samples"),
    (
        "moffle.n_phi_bar",
        "downstream representation-learning samples",
    ),
    ("moffle.n_plan", "downstream planning samples"),
    ("moffle.beta", "elliptical threshold, or `formula`"),
    ("moffle.kappa", "coverage factor, or `formula`"),
    ("moffle.eps_reg", "explore oracle tolerance, or `formula`"),
    (
        "moffle.eps_apx",
        "downstream oracle tolerance, or `formula`",
    ),
    ("moffle.oracle", "eigen, minmaxmin or greedy"),
    ("moffle.simplex", "coordinate discriminators and offset 2"),
    (
        "moffle.offset",
        "uniform actions appended to cover policies",
    ),
    ("moffle.eigen_lambda", "ridge parameter of the eigen oracle"),
    ("moffle.elliptical_t_max", "planner iteration cap"),
    ("moffle.greedy_iteration_limit", "greedy iteration cap"),
    (
        "moffle.restarts",
        "random restarts of the discriminator search",
    ),
    ("moffle.max_steps", "coordinate-ascent sweeps per restart"),
    (
        "moffle.representation_radius",
        "weight radius of representation FQI",
    ),
    (
        "moffle.fit_radius_scale",
        "min-max-min candidate radius B, relative to the discriminator radius",
    ),
    (
        "moffle.reference_radius_scale",
        "min-max-min comparison radius, relative to the discriminator radius",
    ),
    (
        "verify.downstream_tol",
        "allowed gap per level: v* - v <= tol * H",
    ),
    (
        "verify.determinism",
        "rerun the pipeline and compare metrics",
    ),
    (
        "verify.linearity_samples",
        "random functions per level in the linearity check",
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub downstream_tol: f64,
    pub determinism: bool,
    pub linearity_samples: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            downstream_tol: 0.15,
            determinism: true,
            linearity_samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub env_path: Option<PathBuf>,
    pub env: EnvParams,
    pub features: FeatureParams,
    pub rewards: RewardParams,
    pub moffle: MoffleConfig,
    pub verify: VerifyParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            env_path: None,
            env: EnvParams::default(),
            features: FeatureParams::default(),
            rewards: RewardParams::default(),
            moffle: MoffleConfig::default(),
            verify: VerifyParams::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!(
            "bad boolean {value:?} for {key}"
        ))),
    }
}

/// `formula`/`none` clears an override.
fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "formula" | "none" | "default" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl ExperimentConfig {
    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.moffle;
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "env.path" => self.env_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "env.horizon" => self.env.horizon = parse(key, v)?,
            "env.actions" => self.env.actions = parse(key, v)?,
            "env.states" => self.env.states = parse(key, v)?,
            "env.latents" => self.env.latents = parse(key, v)?,
            "env.eta_floor" => self.env.eta_floor = parse(key, v)?,
            "env.alpha" => self.env.alpha = parse(key, v)?,
            "env.uniform_psi" => self.env.uniform_psi = parse_bool(key, v)?,
            "env.max_attempts" => self.env.max_attempts = parse(key, v)?,
            "features.decoys" => self.features.decoys = parse(key, v)?,
            "features.kinds" => {
                self.features.kinds = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse::<DecoyKind>)
                    .collect::<Result<_>>()?
            }
            "features.noise" => self.features.noise = parse(key, v)?,
            "features.shuffle" => self.features.shuffle = parse_bool(key, v)?,
            "rewards.count" => self.rewards.count = parse(key, v)?,
            "rewards.density" => self.rewards.density = parse(key, v)?,
            "moffle.eta_min" => m.eta_min = parse_opt(key, v)?,
            "moffle.eps" => m.eps = parse(key, v)?,
            "moffle.delta" => m.delta = parse(key, v)?,
            "moffle.n" => {
                let n = parse(key, v)?;
                m.n_phi_hat = n;
                m.n_ell = n;
                m.n_phi_bar = n;
                m.n_plan = n;
            }
            "moffle.n_phi_hat" => m.n_phi_hat = parse(key, v)?,
            "moffle.n_ell" => m.n_ell = parse(key, v)?,
            "moffle.n_phi_bar" => m.n_phi_bar = parse(key, v)?,
            "moffle.n_plan" => m.n_plan = parse(key, v)?,
            "moffle.beta" => m.beta = parse_opt(key, v)?,
            "moffle.kappa" => m.kappa = parse_opt(key, v)?,
            "moffle.eps_reg" => m.eps_reg = parse_opt(key, v)?,
            "moffle.eps_apx" => m.eps_apx = parse_opt(key, v)?,
            "moffle.oracle" => m.oracle = v.parse()?,
            "moffle.simplex" => m.simplex = parse_bool(key, v)?,
            "moffle.offset" => m.offset = parse_opt(key, v)?,
            "moffle.eigen_lambda" => m.eigen_lambda = parse(key, v)?,
            "moffle.elliptical_t_max" => m.elliptical_t_max = parse_opt(key, v)?,
            "moffle.greedy_iteration_limit" => m.greedy_iteration_limit = parse_opt(key, v)?,
            "moffle.restarts" => m.restarts = parse(key, v)?,
            "moffle.max_steps" => m.max_steps = parse(key, v)?,
            "moffle.representation_radius" => m.representation_radius = parse_opt(key, v)?,
            "moffle.fit_radius_scale" => m.fit_radius_scale = parse(key, v)?,
            "moffle.reference_radius_scale" => m.reference_radius_scale = parse(key, v)?,
            "verify.downstream_tol" => self.verify.downstream_tol = parse(key, v)?,
            "verify.determinism" => self.verify.determinism = parse_bool(key, v)?,
            "verify.linearity_samples" => self.verify.linearity_samples = parse(key, v)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", n + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// `key=value` from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("override {assignment:?} is not key=value"))
        })?;
        self.set(k, v)
    }

    /// Defaults, then the file (if any), then the overrides. Relative
    /// `env.path` values are resolved against the file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            cfg.apply_text(&std::fs::read_to_string(p)?)?;
            if let (Some(env), Some(dir)) = (&cfg.env_path, p.parent()) {
                if env.is_relative() {
                    cfg.env_path = Some(dir.join(env));
                }
            }
        }
        for o in overrides {
            cfg.apply_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.env_path.is_none() {
            self.env.validate()?;
        }
        self.moffle.validate()?;
        if !(self.verify.downstream_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "verify.downstream_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// The effective configuration in the same flat format.
    pub fn to_text(&self) -> String {
        let m = &self.moffle;
        let opt = |v: Option<f64>| v.map_or("formula".to_string(), |v| v.to_string());
        let opt_n = |v: Option<usize>| v.map_or("none".to_string(), |v| v.to_string());
        let kinds: Vec<&str> = self
            .features
            .kinds
            .iter()
            .map(|k| match k {
                DecoyKind::Permutation => "permutation",
                DecoyKind::RandomSimplex => "random_simplex",
                DecoyKind::Noisy => "noisy",
            })
            .collect();
        let oracle = match m.oracle {
            crate::driver::OracleMode::Eigen => "eigen",
            crate::driver::OracleMode::Minmaxmin => "minmaxmin",
            crate::driver::OracleMode::Greedy => "greedy",
        };
        let mut lines = vec![format!("seed = {}", self.seed)];
        if let Some(p) = &self.env_path {
            lines.push(format!("env.path = {}", p.display()));
        }
        lines.extend([
            format!("env.horizon = {}", self.env.horizon),
            format!("env.actions = {}", self.env.actions),
            format!("env.states = {}", self.env.states),
            format!("env.latents = {}", self.env.latents),
            format!("env.eta_floor = {}", self.env.eta_floor),
            format!("env.alpha = {}", self.env.alpha),
            format!("env.uniform_psi = {}", self.env.uniform_psi),
            format!("env.max_attempts = {}", self.env.max_attempts),
            format!("features.decoys = {}", self.features.decoys),
            format!("features.kinds = {}", kinds.join(",")),
            format!("features.noise = {}", self.features.noise),
            format!("features.shuffle = {}", self.features.shuffle),
            format!("rewards.count = {}", self.rewards.count),
            format!("rewards.density = {}", self.rewards.density),
            format!("moffle.eta_min = {}", opt(m.eta_min)),
            format!("moffle.eps = {}", m.eps),
            format!("moffle.delta = {}", m.delta),
            format!("moffle.n_phi_hat = {}", m.n_phi_hat),
            format!("moffle.n_ell = {}", m.n_ell),
            format!("moffle.n_phi_bar = {}", m.n_phi_bar),
            format!("moffle.n_plan = {}", m.n_plan),
            format!("moffle.beta = {}", opt(m.beta)),
            format!("moffle.kappa = {}", opt(m.kappa)),
            format!("moffle.eps_reg = {}", opt(m.eps_reg)),
            format!("moffle.eps_apx = {}", opt(m.eps_apx)),
            format!("moffle.oracle = {oracle}"),
            format!("moffle.simplex = {}", m.simplex),
            format!("moffle.offset = {}", opt_n(m.offset)),
            format!("moffle.eigen_lambda = {}", m.eigen_lambda),
            format!("moffle.elliptical_t_max = {}", opt_n(m.elliptical_t_max)),
            format!(
                "moffle.greedy_iteration_limit = {}",
                opt_n(m.greedy_iteration_limit)
            ),
            format!("moffle.restarts = {}", m.restarts),
            format!("moffle.max_steps = {}", m.max_steps),
            format!(
                "moffle.representation_radius = {}",
                opt(m.representation_radius)
            ),
            format!("moffle.fit_radius_scale = {}", m.fit_radius_scale),
            format!(
                "moffle.reference_radius_scale = {}",
                m.reference_radius_scale
            ),
            format!("verify.downstream_tol = {}", self.verify.downstream_tol),
            format!("verify.determinism = {}", self.verify.determinism),
            format!(
                "verify.linearity_samples = {}",
                self.verify.linearity_samples
            ),
        ]);
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_file_then_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("# comment\nenv.states = 8\nmoffle.n = 500\nmoffle.beta = formula\n")
            .unwrap();
        cfg.apply_override("env.states=5").unwrap();
        assert_eq!(cfg.env.states, 5);
        assert_eq!(cfg.moffle.n_plan, 500);
        assert_eq!(cfg.moffle.beta, None);
        assert_eq!(cfg.env.horizon, 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("env.colour", "red").is_err());
        assert!(cfg.set("env.states", "many").is_err());
        assert!(cfg.apply_text("no equals sign").is_err());
        assert!(cfg.set("features.kinds", "permutation,bogus").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("moffle.oracle", "greedy").unwrap();
        cfg.set("moffle.elliptical_t_max", "12").unwrap();
        cfg.set("features.kinds", "noisy").unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let text = ExperimentConfig::default().to_text();
        let written: Vec<&str> = text
            .lines()
            .map(|l| l.split_once('=').unwrap().0.trim())
            .collect();
        for k in written {
            assert!(KEYS.iter().any(|(key, _)| *key == k), "{k} undocumented");
        }
    }
}
