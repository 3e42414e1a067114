use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that chooses actions for an episode prefix.
///
/// A behaviour is a uniform mixture over `members()` per-episode rules; the
/// occupancy of a behaviour is therefore the average of its members'
/// occupancies.
pub trait Behavior {
    /// Actions are defined for levels `0..covered_levels()`.
    fn covered_levels(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn members(&self) -> usize;
    /// Writes `P(a | x)` at level `h` for the given member into `out`.
    fn action_probs(&self, member: usize, h: usize, x: usize, out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "table", rename_all = "snake_case")]
pub enum PolicyLevel {
    Deterministic(Vec<usize>),
    Stochastic(Vec<Vec<f64>>),
}

impl PolicyLevel {
    pub fn num_states(&self) -> usize {
        match self {
            PolicyLevel::Deterministic(t) => t.len(),
            PolicyLevel::Stochastic(t) => t.len(),
        }
    }
}

/// Non-stationary policy for levels `0..levels.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    actions: usize,
    levels: Vec<PolicyLevel>,
}

impl Policy {
    pub fn new(actions: usize, levels: Vec<PolicyLevel>) -> Result<Self> {
        for (h, level) in levels.iter().enumerate() {
            match level {
                PolicyLevel::Deterministic(t) => {
                    if let Some(&a) = t.iter().find(|&&a| a >= actions) {
                        return Err(Error::InvalidArgument(format!(
                            "action {a} at level {h} exceeds K = {actions}"
                        )));
                    }
                }
                PolicyLevel::Stochastic(t) => {
                    for (x, row) in t.iter().enumerate() {
                        let sum: f64 = row.iter().sum();
                        if row.len() != actions
                            || row.iter().any(|p| *p < 0.0)
                            || (sum - 1.0).abs() > super::STOCHASTIC_TOL
                        {
                            return Err(Error::NonStochasticRow {
                                table: "policy",
                                level: h,
                                row: x,
                                sum,
                            });
                        }
                    }
                }
            }
        }
        Ok(Self { actions, levels })
    }

    pub fn uniform(actions: usize, states: &[usize]) -> Self {
        let p = 1.0 / actions as f64;
        Self {
            actions,
            levels: states
                .iter()
                .map(|&n| PolicyLevel::Stochastic(vec![vec![p; actions]; n]))
                .collect(),
        }
    }

    pub fn deterministic(actions: usize, tables: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(
            actions,
            tables.into_iter().map(PolicyLevel::Deterministic).collect(),
        )
    }

    pub fn levels(&self) -> &[PolicyLevel] {
        &self.levels
    }

    /// Deterministic action at `(h, x)`, if the level is deterministic.
    pub fn action(&self, h: usize, x: usize) -> Option<usize> {
        match &self.levels[h] {
            PolicyLevel::Deterministic(t) => Some(t[x]),
            PolicyLevel::Stochastic(_) => None,
        }
    }
}

impl Behavior for Policy {
    fn covered_levels(&self) -> usize {
        self.levels.len()
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn members(&self) -> usize {
        1
    }

    fn action_probs(&self, _member: usize, h: usize, x: usize, out: &mut [f64]) {
        match &self.levels[h] {
            PolicyLevel::Deterministic(t) => {
                out.fill(0.0);
                out[t[x]] = 1.0;
            }
            PolicyLevel::Stochastic(t) => out.copy_from_slice(&t[x]),
        }
    }
}

/// `rho_j^{+i}`: pick a member uniformly per episode, follow it for levels
/// `0..=j`, then act uniformly for `i` more levels.
///
/// With `j < 0` there are no members and actions `a_0..=a_{i+j}` are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePolicy {
    actions: usize,
    members: Vec<Policy>,
    last_level: isize,
    uniform_suffix: usize,
}

impl MixturePolicy {
    pub fn new(
        actions: usize,
        members: Vec<Policy>,
        last_level: isize,
        uniform_suffix: usize,
    ) -> Result<Self> {
        if last_level >= 0 {
            if members.is_empty() {
                return Err(Error::InvalidArgument(
                    "a mixture ending at a non-negative level needs members".into(),
                ));
            }
            let needed = last_level as usize + 1;
            for m in &members {
                if m.covered_levels() < needed {
                    return Err(Error::PolicyHorizonMismatch {
                        needed,
                        covered: m.covered_levels(),
                    });
                }
                if m.num_actions() != actions {
                    return Err(Error::ShapeMismatch("member action count differs".into()));
                }
            }
        } else if !members.is_empty() {
            return Err(Error::InvalidArgument(
                "a mixture ending at a negative level has no members".into(),
            ));
        }
        Ok(Self {
            actions,
            members,
            last_level,
            uniform_suffix,
        })
    }

    /// Uniform actions for levels `0..levels`.
    pub fn uniform(actions: usize, levels: usize) -> Self {
        Self {
            actions,
            members: Vec::new(),
            last_level: -1,
            uniform_suffix: levels,
        }
    }

    /// `rho_j^{+i}` from this mixture `rho_j^{+0}`.
    pub fn with_suffix(&self, uniform_suffix: usize) -> Self {
        Self {
            uniform_suffix,
            ..self.clone()
        }
    }

    pub fn member_policies(&self) -> &[Policy] {
        &self.members
    }

    pub fn last_level(&self) -> isize {
        self.last_level
    }

    pub fn uniform_suffix(&self) -> usize {
        self.uniform_suffix
    }
}

impl Behavior for MixturePolicy {
    fn covered_levels(&self) -> usize {
        (self.last_level + 1 + self.uniform_suffix as isize).max(0) as usize
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn members(&self) -> usize {
        self.members.len().max(1)
    }

    fn action_probs(&self, member: usize, h: usize, x: usize, out: &mut [f64]) {
        if (h as isize) <= self.last_level {
            self.members[member].action_probs(0, h, x, out);
        } else {
            out.fill(1.0 / self.actions as f64);
        }
    }
}
