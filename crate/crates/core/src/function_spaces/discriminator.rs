use serde::{Deserialize, Serialize};

use super::{clip, FeatureMap};
use crate::error::{Error, Result};
use crate::mdp::TransitionDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    /// `clip_[0,L](E_unif <phi'(x', a), theta>)`.
    FClipped,
    /// `E_unif <phi'(x', a), theta>` without clipping.
    FUnclipped,
    /// `E_unif phi'(x', a)[i]` (simplex features).
    FSimplexCoord,
    /// `clip_[0,L](max_a R(x', a) + <phi'(x', a), theta>)`.
    GClass,
}

impl DiscriminatorKind {
    pub fn is_clipped(self) -> bool {
        matches!(
            self,
            DiscriminatorKind::FClipped | DiscriminatorKind::GClass
        )
    }
}

/// One next-level test function `v: X_{h+1} -> R`.
///
/// `feature` is `None` only for the zero function used past the last level.
#[derive(Debug, Clone)]
pub struct Discriminator<'a> {
    kind: DiscriminatorKind,
    feature: Option<&'a FeatureMap>,
    reward: Option<&'a [f64]>,
    theta: Vec<f64>,
    coord: usize,
    clip: f64,
    next_states: usize,
}

impl<'a> Discriminator<'a> {
    pub fn f_clipped(feature: &'a FeatureMap, theta: Vec<f64>, clip: f64) -> Result<Self> {
        Self::with_theta(DiscriminatorKind::FClipped, feature, None, theta, clip)
    }

    pub fn f_unclipped(feature: &'a FeatureMap, theta: Vec<f64>) -> Result<Self> {
        Self::with_theta(
            DiscriminatorKind::FUnclipped,
            feature,
            None,
            theta,
            f64::INFINITY,
        )
    }

    pub fn g_class(
        feature: &'a FeatureMap,
        reward: &'a [f64],
        theta: Vec<f64>,
        clip: f64,
    ) -> Result<Self> {
        if reward.len() != feature.num_states() * feature.num_actions() {
            return Err(Error::ShapeMismatch(
                "reward table does not match the feature".into(),
            ));
        }
        Self::with_theta(
            DiscriminatorKind::GClass,
            feature,
            Some(reward),
            theta,
            clip,
        )
    }

    pub fn simplex_coord(feature: &'a FeatureMap, coord: usize) -> Result<Self> {
        if coord >= feature.dim() {
            return Err(Error::CoordOutOfRange {
                coord,
                dim: feature.dim(),
            });
        }
        Ok(Self {
            kind: DiscriminatorKind::FSimplexCoord,
            feature: Some(feature),
            reward: None,
            theta: Vec::new(),
            coord,
            clip: f64::INFINITY,
            next_states: feature.num_states(),
        })
    }

    /// The identically-zero function on a level with `next_states` states.
    pub fn zero(kind: DiscriminatorKind, next_states: usize) -> Self {
        Self {
            kind,
            feature: None,
            reward: None,
            theta: Vec::new(),
            coord: 0,
            clip: f64::INFINITY,
            next_states,
        }
    }

    fn with_theta(
        kind: DiscriminatorKind,
        feature: &'a FeatureMap,
        reward: Option<&'a [f64]>,
        theta: Vec<f64>,
        clip: f64,
    ) -> Result<Self> {
        if theta.len() != feature.dim() {
            return Err(Error::DimMismatch(format!(
                "theta has {} entries, feature dimension is {}",
                theta.len(),
                feature.dim()
            )));
        }
        Ok(Self {
            kind,
            feature: Some(feature),
            reward,
            theta,
            coord: 0,
            clip,
            next_states: feature.num_states(),
        })
    }

    pub fn kind(&self) -> DiscriminatorKind {
        self.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Level of `x_{h+1}`, if the function is attached to a feature.
    pub fn level(&self) -> Option<usize> {
        self.feature.map(FeatureMap::level)
    }

    pub fn eval(&self, x_next: usize) -> f64 {
        let Some(phi) = self.feature else {
            return 0.0;
        };
        let k = phi.num_actions();
        let dot = |a: usize| -> f64 {
            phi.phi(x_next, a)
                .iter()
                .zip(&self.theta)
                .map(|(p, t)| p * t)
                .sum()
        };
        match self.kind {
            DiscriminatorKind::FClipped => {
                let mean = (0..k).map(dot).sum::<f64>() / k as f64;
                clip(mean, 0.0, self.clip)
            }
            DiscriminatorKind::FUnclipped => (0..k).map(dot).sum::<f64>() / k as f64,
            DiscriminatorKind::FSimplexCoord => {
                (0..k).map(|a| phi.phi(x_next, a)[self.coord]).sum::<f64>() / k as f64
            }
            DiscriminatorKind::GClass => {
                let r = self.reward.expect("G discriminators carry a reward");
                let best = (0..k)
                    .map(|a| r[x_next * k + a] + dot(a))
                    .fold(f64::NEG_INFINITY, f64::max);
                clip(best, 0.0, self.clip)
            }
        }
    }

    /// Values on every state of `X_{h+1}`.
    pub fn values(&self) -> Vec<f64> {
        (0..self.next_states).map(|x| self.eval(x)).collect()
    }

    /// `v(D_h)`: the function at each `x_{h+1}` of the dataset.
    pub fn eval_targets(&self, dataset: &TransitionDataset) -> Result<Vec<f64>> {
        if let Some(level) = self.level() {
            if level != dataset.level() + 1 {
                return Err(Error::LevelMismatch {
                    expected: dataset.level() + 1,
                    found: level,
                });
            }
        }
        let table = self.values();
        dataset
            .tuples()
            .iter()
            .map(|t| {
                table.get(t.x_next).copied().ok_or_else(|| {
                    Error::ShapeMismatch(format!("state {} outside X_{{h+1}}", t.x_next))
                })
            })
            .collect()
    }
}

/// One member of a family: a next-level feature, optionally a reward, and
/// for the simplex family a coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyMember {
    pub feature: usize,
    pub reward: Option<usize>,
    pub coord: Option<usize>,
}

/// A discriminator found by a search, with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessRecord {
    /// Index of the next-level feature `phi'`.
    pub feature: Option<usize>,
    pub reward: Option<usize>,
    pub coord: Option<usize>,
    /// Index of the comparison feature `phi~` when the search fixes one.
    pub reference: Option<usize>,
    pub theta: Vec<f64>,
    pub value: f64,
}

/// A discriminator class `F_{h+1}` or `G_{h+1}`: the finite part
/// (next-level features, rewards, coordinates) plus the `theta` radius.
///
/// On the last level there is no next feature and the class is `{0}`.
#[derive(Debug, Clone)]
pub struct DiscriminatorFamily<'a> {
    kind: DiscriminatorKind,
    next: &'a [FeatureMap],
    rewards: Vec<&'a [f64]>,
    radius: f64,
    clip: f64,
    next_states: usize,
    /// Per next feature: `E_unif phi'(x', .)` for every `x'`, row-major.
    mean_rows: Vec<Vec<f64>>,
}

impl<'a> DiscriminatorFamily<'a> {
    fn build(
        kind: DiscriminatorKind,
        next: &'a [FeatureMap],
        rewards: Vec<&'a [f64]>,
        radius: f64,
        clip: f64,
    ) -> Result<Self> {
        let first = next.first().ok_or(Error::EmptyClass { level: 0 })?;
        let mean_rows = next
            .iter()
            .map(|f| (0..f.num_states()).flat_map(|x| f.mean_action(x)).collect())
            .collect();
        Ok(Self {
            kind,
            next,
            rewards,
            radius,
            clip,
            next_states: first.num_states(),
            mean_rows,
        })
    }

    pub fn f_clipped(next: &'a [FeatureMap], radius: f64, clip: f64) -> Result<Self> {
        Self::build(DiscriminatorKind::FClipped, next, Vec::new(), radius, clip)
    }

    pub fn f_unclipped(next: &'a [FeatureMap], radius: f64) -> Result<Self> {
        Self::build(
            DiscriminatorKind::FUnclipped,
            next,
            Vec::new(),
            radius,
            f64::INFINITY,
        )
    }

    pub fn simplex(next: &'a [FeatureMap]) -> Result<Self> {
        Self::build(
            DiscriminatorKind::FSimplexCoord,
            next,
            Vec::new(),
            0.0,
            f64::INFINITY,
        )
    }

    /// `rewards` are the level-`h+1` tables of the reward class.
    pub fn g_class(
        next: &'a [FeatureMap],
        rewards: Vec<&'a [f64]>,
        radius: f64,
        clip: f64,
    ) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::InvalidArgument(
                "G class needs at least one reward".into(),
            ));
        }
        let pairs = next.first().map_or(0, |f| f.num_states() * f.num_actions());
        if rewards.iter().any(|r| r.len() != pairs) {
            return Err(Error::ShapeMismatch(
                "reward tables do not match X_{h+1} x A".into(),
            ));
        }
        Self::build(DiscriminatorKind::GClass, next, rewards, radius, clip)
    }

    /// The class `{0}` on a level with `next_states` states.
    pub fn zero(kind: DiscriminatorKind, next_states: usize) -> Self {
        Self {
            kind,
            next: &[],
            rewards: Vec::new(),
            radius: 0.0,
            clip: f64::INFINITY,
            next_states,
            mean_rows: Vec::new(),
        }
    }

    pub fn kind(&self) -> DiscriminatorKind {
        self.kind
    }

    pub fn is_zero(&self) -> bool {
        self.next.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn next_states(&self) -> usize {
        self.next_states
    }

    pub fn next_features(&self) -> &'a [FeatureMap] {
        self.next
    }

    pub fn dim(&self) -> usize {
        self.next.first().map_or(0, FeatureMap::dim)
    }

    /// Finite index set: features x rewards (G), features x coordinates
    /// (simplex) or features (F). Empty for the zero class.
    pub fn members(&self) -> Vec<FamilyMember> {
        let mut out = Vec::new();
        for feature in 0..self.next.len() {
            match self.kind {
                DiscriminatorKind::GClass => {
                    for r in 0..self.rewards.len() {
                        out.push(FamilyMember {
                            feature,
                            reward: Some(r),
                            coord: None,
                        });
                    }
                }
                DiscriminatorKind::FSimplexCoord => {
                    for i in 0..self.dim() {
                        out.push(FamilyMember {
                            feature,
                            reward: None,
                            coord: Some(i),
                        });
                    }
                }
                _ => out.push(FamilyMember {
                    feature,
                    reward: None,
                    coord: None,
                }),
            }
        }
        out
    }

    /// `E_unif phi'(x', .)` for every `x'` of member feature `feature`
    /// (`|X_{h+1}| x d`, row-major).
    pub fn mean_rows(&self, feature: usize) -> &[f64] {
        &self.mean_rows[feature]
    }

    /// Values over `X_{h+1}` of the member with parameter `theta`.
    pub fn values(&self, member: &FamilyMember, theta: &[f64]) -> Vec<f64> {
        if self.is_zero() {
            return vec![0.0; self.next_states];
        }
        let d = self.dim();
        match self.kind {
            DiscriminatorKind::FClipped | DiscriminatorKind::FUnclipped => self.mean_rows
                [member.feature]
                .chunks(d)
                .map(|u| {
                    let v: f64 = u.iter().zip(theta).map(|(a, b)| a * b).sum();
                    if self.kind == DiscriminatorKind::FClipped {
                        clip(v, 0.0, self.clip)
                    } else {
                        v
                    }
                })
                .collect(),
            DiscriminatorKind::FSimplexCoord => {
                let i = member.coord.unwrap_or(0);
                self.mean_rows[member.feature]
                    .chunks(d)
                    .map(|u| u[i])
                    .collect()
            }
            DiscriminatorKind::GClass => {
                let phi = &self.next[member.feature];
                let r = self.rewards[member.reward.unwrap_or(0)];
                let k = phi.num_actions();
                (0..self.next_states)
                    .map(|x| {
                        let best = (0..k)
                            .map(|a| {
                                r[x * k + a]
                                    + phi
                                        .phi(x, a)
                                        .iter()
                                        .zip(theta)
                                        .map(|(p, t)| p * t)
                                        .sum::<f64>()
                            })
                            .fold(f64::NEG_INFINITY, f64::max);
                        clip(best, 0.0, self.clip)
                    })
                    .collect()
            }
        }
    }

    /// The member as a standalone [`Discriminator`].
    pub fn discriminator(&self, member: &FamilyMember, theta: &[f64]) -> Result<Discriminator<'a>> {
        if self.is_zero() {
            return Ok(Discriminator::zero(self.kind, self.next_states));
        }
        let phi = &self.next[member.feature];
        match self.kind {
            DiscriminatorKind::FClipped => Discriminator::f_clipped(phi, theta.to_vec(), self.clip),
            DiscriminatorKind::FUnclipped => Discriminator::f_unclipped(phi, theta.to_vec()),
            DiscriminatorKind::FSimplexCoord => {
                Discriminator::simplex_coord(phi, member.coord.unwrap_or(0))
            }
            DiscriminatorKind::GClass => Discriminator::g_class(
                phi,
                self.rewards[member.reward.unwrap_or(0)],
                theta.to_vec(),
                self.clip,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::test_envs::random_mdp;
    use crate::mdp::{Provenance, Transition};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feature(rng: &mut ChaCha8Rng, states: usize, actions: usize, d: usize) -> FeatureMap {
        let values = (0..states * actions)
            .flat_map(|_| crate::mdp::test_envs::random_simplex(rng, d))
            .collect();
        FeatureMap::new(1, states, actions, d, values, "f").unwrap()
    }

    #[test]
    fn zero_theta_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = feature(&mut rng, 4, 2, 3);
        let r = vec![0.0; 8];
        let ds = [
            Discriminator::f_clipped(&phi, vec![0.0; 3], 1.0).unwrap(),
            Discriminator::f_unclipped(&phi, vec![0.0; 3]).unwrap(),
            Discriminator::g_class(&phi, &r, vec![0.0; 3], 3.0).unwrap(),
        ];
        for d in &ds {
            assert!(d.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn clipping_and_g_max() {
        let phi = FeatureMap::new(1, 1, 2, 1, vec![1.0, 1.0], "one").unwrap();
        let f = Discriminator::f_clipped(&phi, vec![3.0], 1.0).unwrap();
        assert_eq!(f.eval(0), 1.0);
        let phi = FeatureMap::new(1, 1, 2, 1, vec![0.2, 0.5], "g").unwrap();
        let r = [0.2, 0.4];
        let g = Discriminator::g_class(&phi, &r, vec![1.0], 2.0).unwrap();
        // 0.2 + 0.2 = 0.4 and 0.4 + 0.5 = 0.9.
        let looped = (0..2)
            .map(|a| r[a] + phi.phi(0, a)[0])
            .fold(f64::MIN, f64::max);
        assert!((g.eval(0) - 0.9).abs() < 1e-15);
        assert_eq!(g.eval(0), looped);
    }

    #[test]
    fn simplex_coordinate_checks_range() {
        let phi = FeatureMap::new(1, 1, 2, 2, vec![1.0, 0.0, 0.0, 1.0], "s").unwrap();
        assert_eq!(Discriminator::simplex_coord(&phi, 1).unwrap().eval(0), 0.5);
        assert!(matches!(
            Discriminator::simplex_coord(&phi, 2),
            Err(Error::CoordOutOfRange { coord: 2, dim: 2 })
        ));
    }

    #[test]
    fn targets_match_row_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = feature(&mut rng, 5, 3, 3);
        let theta: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let v = Discriminator::f_clipped(&phi, theta.clone(), 1.0).unwrap();
        let tuples: Vec<Transition> = (0..50)
            .map(|_| Transition {
                x: 0,
                a: 0,
                x_next: rng.random_range(0..5),
            })
            .collect();
        let ds = TransitionDataset::new(0, tuples.clone(), Provenance::default());
        let targets = v.eval_targets(&ds).unwrap();
        for (t, y) in tuples.iter().zip(&targets) {
            let mean: f64 = (0..3)
                .map(|a| {
                    phi.phi(t.x_next, a)
                        .iter()
                        .zip(&theta)
                        .map(|(p, q)| p * q)
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 3.0;
            assert!((y - mean.clamp(0.0, 1.0)).abs() < 1e-15);
        }
        let single = TransitionDataset::new(0, tuples[..1].to_vec(), Provenance::default());
        assert_eq!(
            v.eval_targets(&single).unwrap(),
            vec![v.eval(tuples[0].x_next)]
        );
        let wrong = TransitionDataset::new(1, tuples, Provenance::default());
        assert!(matches!(
            v.eval_targets(&wrong),
            Err(Error::LevelMismatch { .. })
        ));
    }

    #[test]
    fn family_values_agree_with_discriminators() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let next = vec![feature(&mut rng, 4, 2, 3), feature(&mut rng, 4, 2, 3)];
        let r: Vec<f64> = (0..8).map(|_| rng.random()).collect();
        let theta = vec![0.5, -0.3, 0.9];
        let fams = [
            DiscriminatorFamily::f_clipped(&next, 3f64.sqrt(), 1.0).unwrap(),
            DiscriminatorFamily::f_unclipped(&next, 3f64.sqrt()).unwrap(),
            DiscriminatorFamily::simplex(&next).unwrap(),
            DiscriminatorFamily::g_class(&next, vec![&r], 3.0, 3.0).unwrap(),
        ];
        for fam in &fams {
            for m in fam.members() {
                let direct = fam.discriminator(&m, &theta).unwrap().values();
                let fast = fam.values(&m, &theta);
                for (a, b) in direct.iter().zip(&fast) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
        assert_eq!(fams[2].members().len(), 6);
        let zero = DiscriminatorFamily::zero(DiscriminatorKind::FClipped, 4);
        assert!(zero.members().is_empty());
        assert_eq!(
            zero.values(
                &FamilyMember {
                    feature: 0,
                    reward: None,
                    coord: None
                },
                &[]
            ),
            vec![0.0; 4]
        );
    }

    #[test]
    fn realizability_witness_reproduces_clipped_backup() {
        // The F discriminator built from phi*_{h+1} evaluated through the
        // level-h backup equals <phi*_h, theta*_v> for v = that discriminator.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mdp = random_mdp(&mut rng, 2, 2, 5, 3);
        let phi1 = FeatureMap::phi_star(&mdp, 1);
        let v = Discriminator::f_clipped(&phi1, vec![0.9, -0.4, 0.7], 1.0).unwrap();
        let values = v.values();
        let b = crate::mdp::exact_bellman_backup(&mdp, 0, &values).unwrap();
        for x in 0..5 {
            for a in 0..2 {
                let lin: f64 = mdp
                    .phi_star(0, x, a)
                    .iter()
                    .zip(&b.theta)
                    .map(|(p, t)| p * t)
                    .sum();
                assert!((lin - b.values[x * 2 + a]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn clip_is_idempotent(theta in proptest::collection::vec(-3.0f64..3.0, 3), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = feature(&mut rng, 4, 2, 3);
            let v = Discriminator::f_clipped(&phi, theta, 1.0).unwrap();
            for y in v.values() {
                prop_assert_eq!(clip(y, 0.0, 1.0), y);
            }
        }
    }
}
