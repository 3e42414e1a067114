use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::LatentLowRankMDP;

/// Per-level reward tables `R_h: X_h x A -> [0, 1]`, indexed `x * K + a`.
///
/// The number of tables is the planning horizon; it may be shorter than the
/// environment's (the elliptical planner plans to an intermediate level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFunction {
    actions: usize,
    tables: Vec<Vec<f64>>,
    label: String,
}

impl RewardFunction {
    pub fn new(actions: usize, tables: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        for (h, t) in tables.iter().enumerate() {
            if t.len() % actions.max(1) != 0 {
                return Err(Error::ShapeMismatch(format!(
                    "reward table {h} has {} entries, not a multiple of K = {actions}",
                    t.len()
                )));
            }
            if let Some(&value) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::RewardOutOfRange { level: h, value });
            }
        }
        Ok(Self {
            actions,
            tables,
            label: label.into(),
        })
    }

    /// Zero reward over the first `levels` levels of `mdp`.
    pub fn zero(mdp: &LatentLowRankMDP, levels: usize) -> Self {
        Self {
            actions: mdp.num_actions(),
            tables: (0..levels)
                .map(|h| vec![0.0; mdp.num_states(h) * mdp.num_actions()])
                .collect(),
            label: "zero".into(),
        }
    }

    /// Reward that is zero before level `h` and `table` at level `h`.
    pub fn terminal(
        mdp: &LatentLowRankMDP,
        h: usize,
        table: Vec<f64>,
        label: &str,
    ) -> Result<Self> {
        let mut tables: Vec<Vec<f64>> = (0..h)
            .map(|l| vec![0.0; mdp.num_states(l) * mdp.num_actions()])
            .collect();
        tables.push(table);
        Self::new(mdp.num_actions(), tables, label)
    }

    pub fn horizon(&self) -> usize {
        self.tables.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn table(&self, h: usize) -> &[f64] {
        &self.tables[h]
    }

    pub fn value(&self, h: usize, x: usize, a: usize) -> f64 {
        self.tables[h][x * self.actions + a]
    }

    /// Checks the table sizes against `mdp`.
    pub fn validate(&self, mdp: &LatentLowRankMDP) -> Result<()> {
        if self.actions != mdp.num_actions() || self.horizon() > mdp.horizon() {
            return Err(Error::ShapeMismatch(format!(
                "reward '{}' does not fit the environment",
                self.label
            )));
        }
        for (h, t) in self.tables.iter().enumerate() {
            if t.len() != mdp.num_states(h) * self.actions {
                return Err(Error::ShapeMismatch(format!(
                    "reward '{}' level {h} has {} entries",
                    self.label,
                    t.len()
                )));
            }
        }
        Ok(())
    }
}
