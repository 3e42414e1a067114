//! Offline planning and evaluation: FQI, FQE and the elliptical planner.

mod elliptical;
mod fitted;

pub use elliptical::{
    default_t_max, elliptical_planner, elliptical_reward, write_trace_csv, EllipticalConfig,
    EllipticalResult, TraceRow,
};
pub use fitted::{fqe, fqi, FqeSolution, FqiSolution, FqiVariant};

use crate::error::{Error, Result};
use crate::function_spaces::FeatureMap;
use crate::mdp::{LatentLowRankMDP, TransitionDataset};
use crate::regression::{FeatureStats, LevelStats};

/// Per-level statistics and candidate features, with the regression
/// statistics of every `(level, feature)` pair computed once.
#[derive(Debug, Clone)]
pub struct PlanningContext<'a> {
    stats: Vec<LevelStats>,
    classes: Vec<&'a [FeatureMap]>,
    feature_stats: Vec<Vec<FeatureStats>>,
}

impl<'a> PlanningContext<'a> {
    /// `classes[h]` is the candidate list at level `h`; `stats` must cover
    /// every such level.
    pub fn new(stats: Vec<LevelStats>, classes: Vec<&'a [FeatureMap]>) -> Result<Self> {
        if stats.len() < classes.len() {
            return Err(Error::MissingLevelData { level: stats.len() });
        }
        let mut feature_stats = Vec::with_capacity(classes.len());
        for (h, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::EmptyClass { level: h });
            }
            if stats[h].level() != h {
                return Err(Error::LevelMismatch {
                    expected: h,
                    found: stats[h].level(),
                });
            }
            feature_stats.push(
                class
                    .iter()
                    .map(|f| stats[h].feature(f))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            stats,
            classes,
            feature_stats,
        })
    }

    /// Statistics from datasets `D_0, D_1, ...` (one per level, in order).
    pub fn from_datasets(
        mdp: &LatentLowRankMDP,
        datasets: &[TransitionDataset],
        classes: Vec<&'a [FeatureMap]>,
    ) -> Result<Self> {
        let stats = datasets
            .iter()
            .enumerate()
            .map(|(h, ds)| {
                if ds.level() != h {
                    return Err(Error::LevelMismatch {
                        expected: h,
                        found: ds.level(),
                    });
                }
                LevelStats::from_dataset(
                    ds,
                    mdp.num_states(h),
                    mdp.num_actions(),
                    mdp.num_states(h + 1),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(stats, classes)
    }

    /// "Infinite data": exact conditional expectations with uniform weight
    /// on every `(x, a)`.
    pub fn exact(mdp: &LatentLowRankMDP, classes: Vec<&'a [FeatureMap]>) -> Result<Self> {
        let stats = (0..classes.len())
            .map(|h| LevelStats::exact_uniform(mdp, h))
            .collect::<Result<Vec<_>>>()?;
        Self::new(stats, classes)
    }

    pub fn levels(&self) -> usize {
        self.classes.len()
    }

    pub fn stats(&self, h: usize) -> &LevelStats {
        &self.stats[h]
    }

    pub fn class(&self, h: usize) -> &'a [FeatureMap] {
        self.classes[h]
    }

    pub fn feature_stats(&self, h: usize, i: usize) -> &FeatureStats {
        &self.feature_stats[h][i]
    }

    fn require(&self, levels: usize) -> Result<()> {
        if levels > self.levels() {
            return Err(Error::MissingLevelData {
                level: self.levels(),
            });
        }
        Ok(())
    }
}
