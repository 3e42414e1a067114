use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::LatentLowRankMDP;

/// Slack allowed on the unit-norm condition for floating-point round-off.
pub const NORM_TOL: f64 = 1e-12;

/// `phi_h: X_h x A -> R^d` as a dense table, row `x * K + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    level: usize,
    states: usize,
    actions: usize,
    dim: usize,
    values: Vec<f64>,
    label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub states: usize,
    pub actions: usize,
}

/// On-disk form of a [`FeatureMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDocument {
    pub level: usize,
    pub d: usize,
    pub shape: FeatureShape,
    /// Row-major `(x * K + a) * d + i`.
    pub values: Vec<f64>,
    pub label: String,
}

impl FeatureMap {
    pub fn new(
        level: usize,
        states: usize,
        actions: usize,
        dim: usize,
        values: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 || values.len() != states * actions * dim {
            return Err(Error::ShapeMismatch(format!(
                "feature table has {} values, expected {states} x {actions} x {dim}",
                values.len()
            )));
        }
        for (row, chunk) in values.chunks(dim).enumerate() {
            let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > 1.0 + NORM_TOL {
                return Err(Error::RowNormExceeded { row, norm });
            }
        }
        Ok(Self {
            level,
            states,
            actions,
            dim,
            values,
            label: label.into(),
        })
    }

    /// The true features `phi*_h` of `mdp`.
    pub fn phi_star(mdp: &LatentLowRankMDP, h: usize) -> Self {
        let mut values = Vec::with_capacity(mdp.num_states(h) * mdp.num_actions() * mdp.dim());
        for x in 0..mdp.num_states(h) {
            for a in 0..mdp.num_actions() {
                values.extend_from_slice(mdp.phi_star(h, x, a));
            }
        }
        Self {
            level: h,
            states: mdp.num_states(h),
            actions: mdp.num_actions(),
            dim: mdp.dim(),
            values,
            label: "phi_star".into(),
        }
    }

    pub fn zero(level: usize, states: usize, actions: usize, dim: usize) -> Self {
        Self {
            level,
            states,
            actions,
            dim,
            values: vec![0.0; states * actions * dim],
            label: "zero".into(),
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn phi(&self, x: usize, a: usize) -> &[f64] {
        let row = x * self.actions + a;
        &self.values[row * self.dim..(row + 1) * self.dim]
    }

    /// Row of a pair index `x * K + a`.
    pub fn row(&self, pair: usize) -> &[f64] {
        &self.values[pair * self.dim..(pair + 1) * self.dim]
    }

    /// `E_{a ~ unif(A)} phi(x, a)`.
    pub fn mean_action(&self, x: usize) -> Vec<f64> {
        let mut u = vec![0.0; self.dim];
        for a in 0..self.actions {
            for (ui, p) in u.iter_mut().zip(self.phi(x, a)) {
                *ui += p;
            }
        }
        let k = self.actions as f64;
        u.iter_mut().for_each(|v| *v /= k);
        u
    }

    /// Checks that the table fits level `level` of `mdp`.
    pub fn check_fits(&self, mdp: &LatentLowRankMDP, level: usize) -> Result<()> {
        if self.level != level {
            return Err(Error::LevelMismatch {
                expected: level,
                found: self.level,
            });
        }
        if self.states != mdp.num_states(level) || self.actions != mdp.num_actions() {
            return Err(Error::ShapeMismatch(format!(
                "feature '{}' is {} x {}, level {level} is {} x {}",
                self.label,
                self.states,
                self.actions,
                mdp.num_states(level),
                mdp.num_actions()
            )));
        }
        Ok(())
    }

    pub fn to_document(&self) -> FeatureDocument {
        FeatureDocument {
            level: self.level,
            d: self.dim,
            shape: FeatureShape {
                states: self.states,
                actions: self.actions,
            },
            values: self.values.clone(),
            label: self.label.clone(),
        }
    }

    pub fn from_document(doc: FeatureDocument) -> Result<Self> {
        Self::new(
            doc.level,
            doc.shape.states,
            doc.shape.actions,
            doc.d,
            doc.values,
            doc.label,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

/// `Phi = (Phi_0, ..., Phi_{H-1})`.
///
/// The position of `phi*` in each level is kept for tests and reports only;
/// learners never read it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClass {
    levels: Vec<Vec<FeatureMap>>,
    star: Option<Vec<usize>>,
}

impl FeatureClass {
    pub fn new(levels: Vec<Vec<FeatureMap>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::EmptyClass { level: 0 });
        }
        for (h, maps) in levels.iter().enumerate() {
            let first = maps.first().ok_or(Error::EmptyClass { level: h })?;
            for m in maps {
                if m.level != h {
                    return Err(Error::LevelMismatch {
                        expected: h,
                        found: m.level,
                    });
                }
                if m.dim != first.dim || m.states != first.states || m.actions != first.actions {
                    return Err(Error::ShapeMismatch(format!(
                        "features at level {h} disagree in shape"
                    )));
                }
            }
        }
        Ok(Self { levels, star: None })
    }

    /// `{phi*_h}` at every level.
    pub fn singleton_star(mdp: &LatentLowRankMDP) -> Self {
        Self {
            levels: (0..mdp.horizon())
                .map(|h| vec![FeatureMap::phi_star(mdp, h)])
                .collect(),
            star: Some(vec![0; mdp.horizon()]),
        }
    }

    pub fn with_star_indices(mut self, star: Vec<usize>) -> Result<Self> {
        if star.len() != self.levels.len()
            || star.iter().zip(&self.levels).any(|(&i, l)| i >= l.len())
        {
            return Err(Error::InvalidArgument(
                "phi* indices do not fit the class".into(),
            ));
        }
        self.star = Some(star);
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, h: usize) -> &[FeatureMap] {
        &self.levels[h]
    }

    pub fn levels(&self) -> &[Vec<FeatureMap>] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels[0][0].dim
    }

    pub fn star_indices(&self) -> Option<&[usize]> {
        self.star.as_deref()
    }

    pub fn check_fits(&self, mdp: &LatentLowRankMDP) -> Result<()> {
        if self.levels.len() != mdp.horizon() {
            return Err(Error::ShapeMismatch(format!(
                "feature class has {} levels, environment {}",
                self.levels.len(),
                mdp.horizon()
            )));
        }
        for (h, maps) in self.levels.iter().enumerate() {
            for m in maps {
                m.check_fits(mdp, h)?;
            }
        }
        Ok(())
    }
}
