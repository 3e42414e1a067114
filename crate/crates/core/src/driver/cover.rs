use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    exact_latent_occupancy, exact_state_action_occupancy, max_terminal_value, LatentLowRankMDP,
    MixturePolicy,
};
use crate::planners::TraceRow;

/// Exploratory mixtures `rho_h` produced by explore, with the data-collection
/// offset that turns them into `rho_{h - offset}^{+offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCover {
    pub actions: usize,
    pub horizon: usize,
    pub offset: usize,
    /// `rho_h`, for the levels where the planner ran.
    pub policies: Vec<Option<MixturePolicy>>,
    /// Final `Gamma` of each planner run.
    pub gammas: Vec<Option<Vec<Vec<f64>>>>,
    pub traces: Vec<Vec<TraceRow>>,
    /// Levels whose planner stopped at its iteration cap.
    pub capped_levels: Vec<usize>,
}

impl PolicyCover {
    pub fn new(actions: usize, horizon: usize, offset: usize) -> Self {
        Self {
            actions,
            horizon,
            offset,
            policies: vec![None; horizon],
            gammas: vec![None; horizon],
            traces: vec![Vec::new(); horizon],
            capped_levels: Vec::new(),
        }
    }

    /// The planner output at level `h` is only needed when some data level
    /// `h + offset` exists.
    pub fn needs_planner(&self, h: usize) -> bool {
        h + self.offset < self.horizon
    }

    /// `rho_{h - offset}^{+offset}`: the behaviour that collects level-`h`
    /// data. Purely uniform when `h < offset`.
    pub fn exploratory(&self, h: usize) -> Result<MixturePolicy> {
        if h < self.offset {
            return Ok(MixturePolicy::uniform(self.actions, h + 1));
        }
        match self.policies.get(h - self.offset) {
            Some(Some(rho)) => Ok(rho.with_suffix(self.offset)),
            _ => Err(Error::MissingLevelData {
                level: h - self.offset,
            }),
        }
    }

    pub fn label(&self, h: usize) -> String {
        format!("rho_{}^+{}", h as isize - self.offset as isize, self.offset)
    }

    /// `false` when some planner hit its cap.
    pub fn complete(&self) -> bool {
        self.capped_levels.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCoverage {
    /// Data level `h`; latent coverage refers to `z_{h+1}`.
    pub level: usize,
    /// `max_{x,a} max_pi P_pi(x, a) / P_rho(x, a)`; `None` when some reachable
    /// pair has zero cover occupancy.
    pub kappa_k: Option<f64>,
    /// Pairs `x * K + a` reachable by some policy but never by the cover.
    pub uncovered: Vec<usize>,
    pub latent_occupancy: Vec<f64>,
    pub latent_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub levels: Vec<LevelCoverage>,
    /// `kappa K` from the configuration.
    pub kappa_k_cfg: f64,
    /// `eta_min / (2 kappa)`.
    pub latent_threshold: f64,
    pub min_latent: f64,
    pub latent_ok: bool,
}

/// Exact coverage of the cover's data-collection mixtures.
///
/// For each level, the best occupancy of every `(x, a)` is found by value
/// iteration on its indicator reward and compared with the cover's
/// occupancy. Also reports the exact latent occupancy of `z_{h+1}`.
pub fn verify_cover(
    mdp: &LatentLowRankMDP,
    cover: &PolicyCover,
    kappa: f64,
    eta_min: f64,
) -> Result<CoverageReport> {
    let k = mdp.num_actions();
    let mut levels = Vec::new();
    for h in 0..mdp.horizon().min(cover.horizon) {
        let rho = cover.exploratory(h)?;
        let occ = exact_state_action_occupancy(mdp, &rho, h)?;
        let mut ratio: f64 = 0.0;
        let mut uncovered = Vec::new();
        let mut indicator = vec![0.0; occ.len()];
        for (pair, &o) in occ.iter().enumerate() {
            indicator[pair] = 1.0;
            let best = max_terminal_value(mdp, h, &indicator);
            indicator[pair] = 0.0;
            if o > 0.0 {
                ratio = ratio.max(best / o);
            } else if best > 0.0 {
                uncovered.push(pair);
            }
        }
        let latent = exact_latent_occupancy(mdp, &rho, h + 1)?;
        let latent_min = latent.iter().cloned().fold(f64::INFINITY, f64::min);
        levels.push(LevelCoverage {
            level: h,
            kappa_k: uncovered.is_empty().then_some(ratio),
            uncovered,
            latent_occupancy: latent,
            latent_min,
        });
    }
    let min_latent = levels
        .iter()
        .map(|l| l.latent_min)
        .fold(f64::INFINITY, f64::min);
    let latent_threshold = eta_min / (2.0 * kappa);
    Ok(CoverageReport {
        kappa_k_cfg: kappa * k as f64,
        latent_threshold,
        min_latent,
        latent_ok: min_latent >= latent_threshold,
        levels,
    })
}
