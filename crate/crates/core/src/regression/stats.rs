use nalgebra::{DMatrix, DVector};

use super::solver::{BallSolution, Gram};
use crate::error::{Error, Result};
use crate::function_spaces::FeatureMap;
use crate::mdp::{LatentLowRankMDP, TransitionDataset};

/// Weighted `(x, a, x')` statistics of one level.
///
/// For a target `y: X_{h+1} -> R` and weight `w`, the mean squared loss of
/// the linear predictor `<phi(x, a), w>` is
/// `y^T D y - 2 w^T P y + w^T G w`, where `G` and `P` depend on the feature
/// (see [`FeatureStats`]) and `D` only on the data.
///
/// From samples, the weights are empirical frequencies and `D` is the
/// diagonal of next-state frequencies. The exact ("infinite data") form
/// replaces each target by its conditional expectation, so
/// `D = sum_{x,a} w(x, a) T(.|x, a) T(.|x, a)^T`.
#[derive(Debug, Clone)]
pub struct LevelStats {
    level: usize,
    actions: usize,
    pair_weight: Vec<f64>,
    joint: Vec<Vec<(usize, f64)>>,
    next_quad: DMatrix<f64>,
    samples: usize,
}

impl LevelStats {
    pub fn from_dataset(
        dataset: &TransitionDataset,
        states: usize,
        actions: usize,
        next_states: usize,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = dataset.len() as f64;
        let mut pair_weight = vec![0.0; states * actions];
        let mut counts = vec![std::collections::BTreeMap::<usize, f64>::new(); states * actions];
        let mut next_quad = DMatrix::zeros(next_states, next_states);
        for t in dataset.tuples() {
            if t.x >= states || t.a >= actions || t.x_next >= next_states {
                return Err(Error::ShapeMismatch(format!(
                    "tuple {t:?} outside level {}",
                    dataset.level()
                )));
            }
            let pair = t.x * actions + t.a;
            pair_weight[pair] += 1.0 / n;
            *counts[pair].entry(t.x_next).or_insert(0.0) += 1.0 / n;
            next_quad[(t.x_next, t.x_next)] += 1.0 / n;
        }
        Ok(Self {
            level: dataset.level(),
            actions,
            pair_weight,
            joint: counts
                .into_iter()
                .map(|m| m.into_iter().collect())
                .collect(),
            next_quad,
            samples: dataset.len(),
        })
    }

    /// Exact statistics under pair weights `weights` (normalised here).
    pub fn exact(mdp: &LatentLowRankMDP, h: usize, weights: &[f64]) -> Result<Self> {
        let k = mdp.num_actions();
        let (nx, nn) = (mdp.num_states(h), mdp.num_states(h + 1));
        if weights.len() != nx * k {
            return Err(Error::ShapeMismatch(
                "pair weights do not match X_h x A".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidArgument(
                "pair weights must be nonnegative with positive sum".into(),
            ));
        }
        let mut next_quad = DMatrix::zeros(nn, nn);
        let mut joint = Vec::with_capacity(nx * k);
        let pair_weight: Vec<f64> = weights.iter().map(|w| w / total).collect();
        for x in 0..nx {
            for a in 0..k {
                let w = pair_weight[x * k + a];
                let row = mdp.transition_row(h, x, a);
                let t = DVector::from_column_slice(row);
                if w > 0.0 {
                    next_quad += &t * t.transpose() * w;
                }
                joint.push(
                    row.iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0 && w > 0.0)
                        .map(|(xn, p)| (xn, w * p))
                        .collect(),
                );
            }
        }
        Ok(Self {
            level: h,
            actions: k,
            pair_weight,
            joint,
            next_quad,
            samples: 0,
        })
    }

    /// Exact statistics with uniform weight on every `(x, a)`.
    pub fn exact_uniform(mdp: &LatentLowRankMDP, h: usize) -> Result<Self> {
        Self::exact(mdp, h, &vec![1.0; mdp.num_states(h) * mdp.num_actions()])
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn next_states(&self) -> usize {
        self.next_quad.nrows()
    }

    /// Number of samples, or 0 for exact statistics.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn pair_weights(&self) -> &[f64] {
        &self.pair_weight
    }

    pub fn next_quad(&self) -> &DMatrix<f64> {
        &self.next_quad
    }

    /// `y^T D y`: the mean of `y(x')^2`.
    pub fn target_energy(&self, y: &[f64]) -> f64 {
        let y = DVector::from_column_slice(y);
        y.dot(&(&self.next_quad * &y))
    }

    /// Statistics of `feature` on this level.
    pub fn feature(&self, feature: &FeatureMap) -> Result<FeatureStats> {
        FeatureStats::new(self, feature)
    }
}

/// `G = sum w(x, a) phi phi^T` and `P = sum w(x, a, x') phi e_{x'}^T`.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    gram: Gram,
    cross: DMatrix<f64>,
}

impl FeatureStats {
    pub fn new(stats: &LevelStats, feature: &FeatureMap) -> Result<Self> {
        if feature.level() != stats.level {
            return Err(Error::LevelMismatch {
                expected: stats.level,
                found: feature.level(),
            });
        }
        if feature.num_states() * feature.num_actions() != stats.pair_weight.len() {
            return Err(Error::ShapeMismatch(format!(
                "feature '{}' does not match level {}",
                feature.label(),
                stats.level
            )));
        }
        let d = feature.dim();
        let mut g = DMatrix::zeros(d, d);
        let mut cross = DMatrix::zeros(d, stats.next_states());
        for (pair, (&w, joint)) in stats.pair_weight.iter().zip(&stats.joint).enumerate() {
            if w == 0.0 {
                continue;
            }
            let phi = DVector::from_column_slice(feature.row(pair));
            g += &phi * phi.transpose() * w;
            for &(xn, p) in joint {
                cross.column_mut(xn).axpy(p, &phi, 1.0);
            }
        }
        Ok(Self {
            gram: Gram::new(g),
            cross,
        })
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn rhs(&self, y: &[f64]) -> DVector<f64> {
        &self.cross * DVector::from_column_slice(y)
    }

    /// Mean loss of `w` against `y`.
    pub fn loss(&self, stats: &LevelStats, w: &DVector<f64>, y: &[f64]) -> f64 {
        self.gram.loss(w, &self.rhs(y), stats.target_energy(y))
    }

    /// `min_{||w|| <= radius}` of the mean loss against `y`.
    pub fn fit(&self, stats: &LevelStats, y: &[f64], radius: f64) -> BallSolution {
        self.gram
            .solve_ball(&self.rhs(y), stats.target_energy(y), radius)
    }

    /// `Q` with `y^T Q y` equal to the mean ridge residual `(1/n)||A y||^2`:
    /// `Q = D - 2 P^T S^{-1} P + P^T S^{-1} G S^{-1} P`, `S = G + lambda I`.
    pub fn ridge_residual_quad(&self, stats: &LevelStats, lambda: f64) -> DMatrix<f64> {
        let s_inv = self.gram.ridge_inverse(lambda);
        let sp = &s_inv * &self.cross;
        let ptsp = self.cross.tr_mul(&sp);
        let gsp = self.gram.matrix() * &sp;
        stats.next_quad() - ptsp * 2.0 + sp.tr_mul(&gsp)
    }
}
