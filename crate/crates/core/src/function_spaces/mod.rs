//! Feature maps and classes, discriminators, rewards and Q-functions.

mod discriminator;
mod features;
mod qfunction;
mod reward;

pub use discriminator::{
    Discriminator, DiscriminatorFamily, DiscriminatorKind, FamilyMember, WitnessRecord,
};
pub use features::{FeatureClass, FeatureDocument, FeatureMap, FeatureShape, NORM_TOL};
pub use qfunction::{greedy_policy_from_q, QFunction};
pub use reward::RewardFunction;

/// `min(max(v, lo), hi)`.
pub fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}
