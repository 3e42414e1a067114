use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rep_learning::SearchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Minmaxmin,
    Greedy,
    Eigen,
}

impl std::str::FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minmaxmin" => Ok(OracleMode::Minmaxmin),
            "greedy" => Ok(OracleMode::Greedy),
            "eigen" => Ok(OracleMode::Eigen),
            other => Err(Error::InvalidConfig(format!(
                "unknown oracle mode {other:?}"
            ))),
        }
    }
}

/// Parameters of a MOFFLE run.
///
/// `beta`, `kappa`, `eps_reg` and `eps_apx` default to their closed forms
/// when `None`. The theoretical values are far too small to be usable at
/// desk scale, so [`MoffleConfig::default`] overrides `beta`, `eps_reg` and
/// `eps_apx`; every override is listed in [`Derived::overrides`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoffleConfig {
    /// Reachability lower bound; `None` uses the environment's exact value.
    pub eta_min: Option<f64>,
    pub eps: f64,
    pub delta: f64,
    pub n_phi_hat: usize,
    pub n_ell: usize,
    pub n_phi_bar: usize,
    pub n_plan: usize,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub eps_reg: Option<f64>,
    pub eps_apx: Option<f64>,
    pub oracle: OracleMode,
    pub simplex: bool,
    /// Number of uniform actions appended to the cover policies; `None` is
    /// 3 (2 in simplex mode).
    pub offset: Option<usize>,
    pub eigen_lambda: f64,
    pub elliptical_t_max: Option<usize>,
    pub greedy_iteration_limit: Option<usize>,
    pub restarts: usize,
    pub max_steps: usize,
    /// Radius of the representation-FQI weights; `None` is `H sqrt(d)`.
    pub representation_radius: Option<f64>,
    /// Min-max-min oracle: the candidate's weight radius `B` and the
    /// comparison radius `L sqrt(d)`, as multiples of the family radius
    /// (`sqrt(d)` for F, `H sqrt(d)` for G).
    pub fit_radius_scale: f64,
    pub reference_radius_scale: f64,
}

impl Default for MoffleConfig {
    fn default() -> Self {
        Self {
            eta_min: None,
            eps: 0.5,
            delta: 0.1,
            n_phi_hat: 10_000,
            n_ell: 10_000,
            n_phi_bar: 10_000,
            n_plan: 10_000,
            beta: Some(0.4),
            kappa: None,
            eps_reg: Some(0.05),
            eps_apx: Some(0.05),
            oracle: OracleMode::Eigen,
            simplex: false,
            offset: None,
            eigen_lambda: 1e-3,
            elliptical_t_max: None,
            greedy_iteration_limit: None,
            restarts: 64,
            max_steps: 200,
            representation_radius: None,
            fit_radius_scale: 1.0,
            reference_radius_scale: 1.0,
        }
    }
}

/// Quantities derived from a [`MoffleConfig`] and the problem sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub eta_min: f64,
    pub beta: f64,
    pub kappa: f64,
    pub eps_reg: f64,
    pub eps_apx: f64,
    pub offset: usize,
    /// Exponent of `K` in `beta` and `kappa` (4, or 2 in simplex mode).
    pub k_power: i32,
    /// Exponent of `K` in `eps_reg` (9, or 5 in simplex mode).
    pub k_power_reg: i32,
    /// Fit radius of the explore-phase discriminator class.
    pub b_radius: f64,
    /// `(name, formula value, used value)` for every overridden quantity.
    pub overrides: Vec<(String, f64, f64)>,
}

/// Solves `beta log(1 + 8 / beta) = target` for `beta` in `(0, 1]` by
/// bisection; the left side is increasing in `beta`.
pub fn solve_beta(target: f64) -> f64 {
    let f = |b: f64| b * (1.0 + 8.0 / b).ln();
    if target >= f(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

impl MoffleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps", self.eps),
            ("delta", self.delta),
            ("eigen_lambda", self.eigen_lambda),
            ("fit_radius_scale", self.fit_radius_scale),
            ("reference_radius_scale", self.reference_radius_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        for (name, n) in [
            ("n_phi_hat", self.n_phi_hat),
            ("n_ell", self.n_ell),
            ("n_phi_bar", self.n_phi_bar),
            ("n_plan", self.n_plan),
        ] {
            if n == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::InvalidConfig("beta must lie in (0, 1]".into()));
            }
        }
        for (name, v) in [
            ("eta_min", self.eta_min),
            ("kappa", self.kappa),
            ("eps_reg", self.eps_reg),
            ("eps_apx", self.eps_apx),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::InvalidConfig(format!("{name} must be positive")));
                }
            }
        }
        if self.offset == Some(0) {
            return Err(Error::InvalidConfig("offset must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest per-phase sample size; one dataset of this size is collected
    /// per level and every phase uses a prefix of it.
    pub fn n_max(&self) -> usize {
        self.n_phi_hat
            .max(self.n_ell)
            .max(self.n_phi_bar)
            .max(self.n_plan)
    }

    pub fn search(&self, stream: crate::rng::RngStream) -> SearchConfig {
        SearchConfig {
            restarts: self.restarts,
            max_steps: self.max_steps,
            ridge_lambda: self.eigen_lambda,
            stream,
            ..SearchConfig::default()
        }
    }

    /// Derived quantities for dimension `d`, `K` actions and horizon `H`;
    /// `env_eta` is used when `eta_min` is not set.
    pub fn derive(&self, d: usize, k: usize, horizon: usize, env_eta: f64) -> Result<Derived> {
        self.validate()?;
        let eta = self.eta_min.unwrap_or(env_eta);
        if !(eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta_min = {eta} must be positive"
            )));
        }
        let (df, kf, hf) = (d as f64, k as f64, horizon as f64);
        let (k_power, k_power_reg) = if self.simplex { (2, 5) } else { (4, 9) };
        let b_radius = df.sqrt();
        let mut overrides = Vec::new();
        let mut pick = |name: &str, formula: f64, given: Option<f64>| match given {
            Some(v) => {
                overrides.push((name.to_string(), formula, v));
                v
            }
            None => formula,
        };
        let beta_formula =
            solve_beta(eta * eta / (128.0 * df * kf.powi(k_power) * b_radius * b_radius));
        let beta = pick("beta", beta_formula, self.beta);
        let log_term = (1.0 + 8.0 / beta).ln();
        let kappa = pick(
            "kappa",
            64.0 * df * kf.powi(k_power) * log_term / eta,
            self.kappa,
        );
        let eps_reg = pick(
            "eps_reg",
            eta.powi(3) / (df * df * kf.powi(k_power_reg) * log_term * log_term),
            self.eps_reg,
        );
        let eps_apx = pick(
            "eps_apx",
            self.eps * self.eps / (16.0 * hf.powi(4) * kappa * kf),
            self.eps_apx,
        );
        Ok(Derived {
            eta_min: eta,
            beta,
            kappa,
            eps_reg,
            eps_apx,
            offset: self.offset.unwrap_or(if self.simplex { 2 } else { 3 }),
            k_power,
            k_power_reg,
            b_radius,
            overrides,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formulas_without_overrides() {
        let cfg = MoffleConfig {
            beta: None,
            eps_reg: None,
            eps_apx: None,
            eta_min: Some(0.05),
            ..MoffleConfig::default()
        };
        let d = cfg.derive(3, 2, 3, 0.5).unwrap();
        assert!(d.overrides.is_empty());
        let target = 0.05f64.powi(2) / (128.0 * 3.0 * 16.0 * 3.0);
        assert!((d.beta * (1.0 + 8.0 / d.beta).ln() - target).abs() < 1e-15);
        let log_term = (1.0 + 8.0 / d.beta).ln();
        assert!((d.kappa - 64.0 * 3.0 * 16.0 * log_term / 0.05).abs() < 1e-6 * d.kappa);
        assert!((d.eps_apx - 0.25 / (16.0 * 81.0 * d.kappa * 2.0)).abs() < 1e-20);
        assert_eq!(d.offset, 3);
    }

    #[test]
    fn overrides_are_logged() {
        let d = MoffleConfig::default().derive(3, 2, 3, 0.05).unwrap();
        assert_eq!(d.beta, 0.4);
        let names: Vec<_> = d.overrides.iter().map(|o| o.0.as_str()).collect();
        assert_eq!(names, ["beta", "eps_reg", "eps_apx"]);
        // kappa follows the overridden beta.
        assert!((d.kappa - 64.0 * 3.0 * 16.0 * 21f64.ln() / 0.05).abs() < 1e-9);
    }

    #[test]
    fn simplex_mode_exponents_and_offset() {
        let cfg = MoffleConfig {
            simplex: true,
            ..MoffleConfig::default()
        };
        let d = cfg.derive(3, 2, 3, 0.05).unwrap();
        assert_eq!((d.k_power, d.k_power_reg, d.offset), (2, 5, 2));
    }

    #[test]
    fn validation() {
        let bad = MoffleConfig {
            n_plan: 0,
            ..MoffleConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MoffleConfig {
            beta: Some(1.5),
            ..MoffleConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!("EIGEN".parse::<OracleMode>().is_ok());
        assert!("foo".parse::<OracleMode>().is_err());
    }

    proptest! {
        #[test]
        fn beta_solves_its_equation(target in 1e-9f64..2.0) {
            let b = solve_beta(target);
            prop_assert!(b > 0.0 && b <= 1.0);
            prop_assert!((b * (1.0 + 8.0 / b).ln() - target).abs() <= 1e-9 * target.max(1e-6));
        }
    }
}
