use super::{clip, FeatureMap};
use crate::error::{Error, Result};
use crate::mdp::{Policy, PolicyLevel};

/// `f(x, a) = R_h(x, a) + <phi_h(x, a), w>`, clipped to `[0, clip_hi]` when
/// evaluated as a value.
#[derive(Debug, Clone)]
pub struct QFunction<'a> {
    feature: &'a FeatureMap,
    reward: &'a [f64],
    w: Vec<f64>,
    clip_hi: f64,
}

impl<'a> QFunction<'a> {
    pub fn new(
        feature: &'a FeatureMap,
        reward: &'a [f64],
        w: Vec<f64>,
        clip_hi: f64,
    ) -> Result<Self> {
        if w.len() != feature.dim() {
            return Err(Error::DimMismatch(format!(
                "w has {} entries, feature dimension is {}",
                w.len(),
                feature.dim()
            )));
        }
        if reward.len() != feature.num_states() * feature.num_actions() {
            return Err(Error::ShapeMismatch(
                "reward table does not match the feature".into(),
            ));
        }
        Ok(Self {
            feature,
            reward,
            w,
            clip_hi,
        })
    }

    pub fn weight(&self) -> &[f64] {
        &self.w
    }

    pub fn feature(&self) -> &FeatureMap {
        self.feature
    }

    /// `R + <phi, w>` before clipping.
    pub fn raw(&self, x: usize, a: usize) -> f64 {
        let k = self.feature.num_actions();
        self.reward[x * k + a]
            + self
                .feature
                .phi(x, a)
                .iter()
                .zip(&self.w)
                .map(|(p, w)| p * w)
                .sum::<f64>()
    }

    pub fn eval(&self, x: usize, a: usize) -> f64 {
        clip(self.raw(x, a), 0.0, self.clip_hi)
    }

    /// Unclipped table indexed `x * K + a`.
    pub fn raw_table(&self) -> Vec<f64> {
        let k = self.feature.num_actions();
        (0..self.feature.num_states() * k)
            .map(|p| self.raw(p / k, p % k))
            .collect()
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Deterministic greedy policy; `q[h]` is indexed `x * K + a` and ties go
/// to the lowest action id.
pub fn greedy_policy_from_q(actions: usize, q: &[Vec<f64>]) -> Result<Policy> {
    let levels = q
        .iter()
        .map(|table| PolicyLevel::Deterministic(table.chunks(actions).map(argmax_lowest).collect()))
        .collect();
    Policy::new(actions, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tie_and_dominance() {
        let p = greedy_policy_from_q(2, &[vec![0.3, 0.3, 0.1, 0.1]]).unwrap();
        assert_eq!(p.action(0, 0), Some(0));
        assert_eq!(p.action(0, 1), Some(0));
        let p = greedy_policy_from_q(2, &[vec![0.0, 1.0, 0.5, 0.6]]).unwrap();
        assert_eq!(p.action(0, 0), Some(1));
        assert_eq!(p.action(0, 1), Some(1));
    }

    #[test]
    fn random_q_matches_exhaustive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..12).map(|_| rng.random()).collect())
            .collect();
        let p = greedy_policy_from_q(3, &q).unwrap();
        for (h, table) in q.iter().enumerate() {
            for x in 0..4 {
                let mut best = 0;
                for a in 0..3 {
                    if table[x * 3 + a] > table[x * 3 + best] {
                        best = a;
                    }
                }
                assert_eq!(p.action(h, x), Some(best));
            }
        }
    }

    #[test]
    fn q_function_clips() {
        let phi = FeatureMap::new(0, 1, 2, 1, vec![1.0, 0.5], "q").unwrap();
        let r = [1.0, 0.0];
        let q = QFunction::new(&phi, &r, vec![4.0], 3.0).unwrap();
        assert_eq!(q.raw(0, 0), 5.0);
        assert_eq!(q.eval(0, 0), 3.0);
        assert_eq!(q.eval(0, 1), 2.0);
        assert!(QFunction::new(&phi, &r, vec![1.0, 2.0], 3.0).is_err());
    }

    proptest! {
        #[test]
        fn positive_scaling_keeps_argmax(q in proptest::collection::vec(-5.0f64..5.0, 8), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
            let a = greedy_policy_from_q(2, &[q]).unwrap();
            let b = greedy_policy_from_q(2, &[scaled]).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
