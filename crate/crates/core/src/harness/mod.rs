//! Generators, configuration, pipeline stages and verification.

pub mod checks;
mod config;
mod generate;
mod pipeline;
mod report;

pub use config::{ExperimentConfig, VerifyParams, KEYS};
pub use generate::{
    generate_env, generate_feature_class, generate_rewards, DecoyKind, EnvParams, FeatureParams,
    RewardParams, NOISY_MIN_DISTANCE,
};
pub use pipeline::{Pipeline, RunPaths, Stage};
pub use report::{
    CheckResult, DownstreamResult, EnvSummary, Metrics, PlannerSummary, RunReport, Seeds,
};
