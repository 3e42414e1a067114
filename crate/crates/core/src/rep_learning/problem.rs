use crate::error::{Error, Result};
use crate::function_spaces::FeatureMap;
use crate::regression::{FeatureStats, LevelStats};

/// A candidate class `Phi_h` together with the level's statistics.
#[derive(Debug, Clone)]
pub struct LevelProblem<'a> {
    stats: &'a LevelStats,
    features: &'a [FeatureMap],
    feature_stats: Vec<FeatureStats>,
}

impl<'a> LevelProblem<'a> {
    pub fn new(stats: &'a LevelStats, features: &'a [FeatureMap]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyClass {
                level: stats.level(),
            });
        }
        let feature_stats = features
            .iter()
            .map(|f| stats.feature(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stats,
            features,
            feature_stats,
        })
    }

    pub fn stats(&self) -> &LevelStats {
        self.stats
    }

    pub fn features(&self) -> &'a [FeatureMap] {
        self.features
    }

    pub fn feature_stats(&self, i: usize) -> &FeatureStats {
        &self.feature_stats[i]
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].dim()
    }

    /// `min_{||w|| <= radius} L(phi_i, w, y)`.
    pub fn loss(&self, i: usize, y: &[f64], radius: f64) -> f64 {
        self.feature_stats[i].fit(self.stats, y, radius).loss
    }

    /// `min_{phi~, ||w~|| <= radius} L(phi~, w~, y)` and its minimiser.
    pub fn best_reference(&self, y: &[f64], radius: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.len() {
            let l = self.loss(i, y, radius);
            if l < best.1 {
                best = (i, l);
            }
        }
        best
    }

    /// `min_{||w|| <= radius} L(phi_i, w, y) - min_{phi~, ||w~|| <= ref_radius} L(phi~, w~, y)`.
    pub fn excess(&self, i: usize, y: &[f64], radius: f64, ref_radius: f64) -> f64 {
        self.loss(i, y, radius) - self.best_reference(y, ref_radius).1
    }
}
