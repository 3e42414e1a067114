//! Orchestration of exploration and feature learning.
//!
//! [`explore`] builds the policy cover level by level; [`moffle`] runs it and
//! then learns the downstream features `phi_bar`. One dataset of
//! [`MoffleConfig::n_max`] tuples is collected per level from
//! `rho_{h - offset}^{+offset}`, and each phase uses a prefix of it.

mod config;
mod cover;

pub use config::{solve_beta, Derived, MoffleConfig, OracleMode};
pub use cover::{verify_cover, CoverageReport, LevelCoverage, PolicyCover};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_spaces::{
    DiscriminatorFamily, DiscriminatorKind, FeatureClass, FeatureMap, RewardFunction,
};
use crate::mdp::{
    collect_dataset, exact_policy_value, value_iteration, LatentLowRankMDP, Policy,
    TransitionDataset,
};
use crate::planners::{
    elliptical_planner, fqi, EllipticalConfig, FqiSolution, FqiVariant, PlanningContext,
};
use crate::regression::LevelStats;
use crate::rep_learning::{
    flo_eigen, flo_minmaxmin, greedy_select, GreedyConfig, LevelProblem, OracleReport,
};
use crate::rng::RngStream;

/// Stream labels under the run's stream.
const DATA_STREAM: u64 = 0;
const EXPLORE_SEARCH_STREAM: u64 = 1;
const LEARN_SEARCH_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct ExploreOutput {
    pub cover: PolicyCover,
    /// Full-size dataset per level.
    pub datasets: Vec<TransitionDataset>,
    /// Index of `phi_hat_h` in `Phi_h`.
    pub phi_hat: Vec<usize>,
    pub reports: Vec<OracleReport>,
}

#[derive(Debug, Clone)]
pub struct MoffleRun {
    pub derived: Derived,
    pub cover: PolicyCover,
    pub datasets: Vec<TransitionDataset>,
    pub phi_hat: Vec<usize>,
    /// Index of `phi_bar_h` in `Phi_h`.
    pub phi_bar: Vec<usize>,
    pub explore_reports: Vec<OracleReport>,
    pub learn_reports: Vec<OracleReport>,
    n_plan: usize,
}

impl MoffleRun {
    /// Planning datasets `D_h` (prefixes of size `n_plan`).
    pub fn planning_datasets(&self) -> Vec<TransitionDataset> {
        self.datasets.iter().map(|d| d.head(self.n_plan)).collect()
    }

    pub fn phi_bar_maps(&self, class: &FeatureClass) -> Vec<FeatureMap> {
        self.phi_bar
            .iter()
            .enumerate()
            .map(|(h, &i)| class.level(h)[i].clone())
            .collect()
    }
}

fn level_stats(mdp: &LatentLowRankMDP, ds: &TransitionDataset) -> Result<LevelStats> {
    let h = ds.level();
    LevelStats::from_dataset(
        ds,
        mdp.num_states(h),
        mdp.num_actions(),
        mdp.num_states(h + 1),
    )
}

fn next_class(class: &FeatureClass, h: usize) -> &[FeatureMap] {
    if h + 1 < class.horizon() {
        class.level(h + 1)
    } else {
        &[]
    }
}

/// Learns `phi_hat_h` against the explore-phase discriminators.
///
/// The last level has no next-level features; its family is the zero
/// function, for which every candidate scores 0.
fn learn_phi_hat(
    mdp: &LatentLowRankMDP,
    class: &FeatureClass,
    stats: &LevelStats,
    cfg: &MoffleConfig,
    derived: &Derived,
    search_stream: RngStream,
) -> Result<(usize, OracleReport)> {
    let h = stats.level();
    let problem = LevelProblem::new(stats, class.level(h))?;
    let next = next_class(class, h);
    let x_next = mdp.num_states(h + 1);
    let b = derived.b_radius;
    let search = cfg.search(search_stream);
    if cfg.simplex {
        let family = if next.is_empty() {
            DiscriminatorFamily::zero(DiscriminatorKind::FSimplexCoord, x_next)
        } else {
            DiscriminatorFamily::simplex(next)?
        };
        return match cfg.oracle {
            OracleMode::Greedy => greedy_select(
                &problem,
                &family,
                &greedy_cfg(derived.eps_reg, 1.0, cfg),
                &search,
            ),
            _ => flo_minmaxmin(
                &problem,
                &family,
                b * cfg.fit_radius_scale,
                b * cfg.reference_radius_scale,
                &search,
            ),
        };
    }
    let family = if next.is_empty() {
        DiscriminatorFamily::zero(DiscriminatorKind::FClipped, x_next)
    } else {
        DiscriminatorFamily::f_clipped(next, b, 1.0)?
    };
    match cfg.oracle {
        OracleMode::Eigen => flo_eigen(&problem, next, cfg.eigen_lambda),
        OracleMode::Minmaxmin => flo_minmaxmin(
            &problem,
            &family,
            b * cfg.fit_radius_scale,
            b * cfg.reference_radius_scale,
            &search,
        ),
        OracleMode::Greedy => greedy_select(
            &problem,
            &family,
            &greedy_cfg(derived.eps_reg, 1.0, cfg),
            &search,
        ),
    }
}

fn greedy_cfg(eps: f64, l_bound: f64, cfg: &MoffleConfig) -> GreedyConfig {
    GreedyConfig {
        iteration_limit: cfg.greedy_iteration_limit,
        ..GreedyConfig::new(eps, l_bound)
    }
}

/// Builds the exploratory policy cover.
///
/// At each level `h`: collect data from `rho_{h - offset}^{+offset}`, learn
/// `phi_hat_h`, and (when a later level needs it) run the elliptical
/// planner on `phi_hat_h` with the data of levels `0..=h` to obtain `rho_h`.
pub fn explore(
    mdp: &LatentLowRankMDP,
    class: &FeatureClass,
    cfg: &MoffleConfig,
    derived: &Derived,
    stream: &RngStream,
) -> Result<ExploreOutput> {
    class.check_fits(mdp)?;
    let horizon = mdp.horizon();
    let k = mdp.num_actions();
    let n_max = cfg.n_max();
    let mut cover = PolicyCover::new(k, horizon, derived.offset);
    let mut datasets: Vec<TransitionDataset> = Vec::with_capacity(horizon);
    let mut phi_hat = Vec::with_capacity(horizon);
    let mut reports = Vec::with_capacity(horizon);
    let elliptical = EllipticalConfig {
        t_max: cfg.elliptical_t_max,
        ..EllipticalConfig::new(derived.beta)?
    };
    for h in 0..horizon {
        let stage = |e: Error| e.in_stage(format!("explore level {h}"));
        let rho = cover.exploratory(h).map_err(stage)?;
        let data_stream = stream.derive(DATA_STREAM).derive(h as u64);
        let ds =
            collect_dataset(mdp, &rho, h, n_max, &data_stream, &cover.label(h)).map_err(stage)?;
        let stats = level_stats(mdp, &ds.head(cfg.n_phi_hat)).map_err(stage)?;
        let search_stream = stream.derive(EXPLORE_SEARCH_STREAM).derive(h as u64);
        let (idx, report) =
            learn_phi_hat(mdp, class, &stats, cfg, derived, search_stream).map_err(stage)?;
        datasets.push(ds);
        phi_hat.push(idx);
        reports.push(report);

        if cover.needs_planner(h) {
            let ell: Vec<TransitionDataset> = datasets.iter().map(|d| d.head(cfg.n_ell)).collect();
            let classes = (0..=h).map(|l| class.level(l)).collect();
            let ctx = PlanningContext::from_datasets(mdp, &ell, classes).map_err(stage)?;
            let res = elliptical_planner(&ctx, h, &class.level(h)[idx], mdp.init(), &elliptical)
                .map_err(stage)?;
            if !res.converged {
                cover.capped_levels.push(h);
            }
            cover.gammas[h] = Some(
                res.gamma
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
            );
            cover.traces[h] = res.trace;
            cover.policies[h] = Some(res.mixture);
        }
    }
    Ok(ExploreOutput {
        cover,
        datasets,
        phi_hat,
        reports,
    })
}

/// Learns `phi_bar_h` against the reward-dependent discriminators built from
/// `rewards` at level `h + 1`.
pub fn learn_phi_bar(
    mdp: &LatentLowRankMDP,
    class: &FeatureClass,
    rewards: &[RewardFunction],
    stats: &LevelStats,
    cfg: &MoffleConfig,
    derived: &Derived,
    search_stream: RngStream,
) -> Result<(usize, OracleReport)> {
    let h = stats.level();
    let horizon = mdp.horizon() as f64;
    let radius = horizon * (class.dim() as f64).sqrt();
    let problem = LevelProblem::new(stats, class.level(h))?;
    let next = next_class(class, h);
    let family = if next.is_empty() || rewards.is_empty() {
        DiscriminatorFamily::zero(DiscriminatorKind::GClass, mdp.num_states(h + 1))
    } else {
        let tables = rewards.iter().map(|r| r.table(h + 1)).collect();
        DiscriminatorFamily::g_class(next, tables, radius, horizon)?
    };
    let search = cfg.search(search_stream);
    match cfg.oracle {
        OracleMode::Greedy => greedy_select(
            &problem,
            &family,
            &greedy_cfg(derived.eps_apx, horizon, cfg),
            &search,
        ),
        _ => flo_minmaxmin(
            &problem,
            &family,
            radius * cfg.fit_radius_scale,
            radius * cfg.reference_radius_scale,
            &search,
        ),
    }
}

/// `phi_bar_h` for every level, each learned on the first `n_phi_bar`
/// tuples of `datasets[h]`.
pub fn learn_features(
    mdp: &LatentLowRankMDP,
    class: &FeatureClass,
    rewards: &[RewardFunction],
    datasets: &[TransitionDataset],
    cfg: &MoffleConfig,
    derived: &Derived,
    stream: &RngStream,
) -> Result<(Vec<usize>, Vec<OracleReport>)> {
    let mut phi_bar = Vec::with_capacity(datasets.len());
    let mut reports = Vec::with_capacity(datasets.len());
    for (h, ds) in datasets.iter().enumerate() {
        let stage = |e: Error| e.in_stage(format!("learn level {h}"));
        let stats = level_stats(mdp, &ds.head(cfg.n_phi_bar)).map_err(stage)?;
        let search_stream = stream.derive(LEARN_SEARCH_STREAM).derive(h as u64);
        let (idx, report) = learn_phi_bar(mdp, class, rewards, &stats, cfg, derived, search_stream)
            .map_err(stage)?;
        phi_bar.push(idx);
        reports.push(report);
    }
    Ok((phi_bar, reports))
}

/// Explore, then learn `phi_bar_h` at every level from the same data.
pub fn moffle(
    mdp: &LatentLowRankMDP,
    class: &FeatureClass,
    rewards: &[RewardFunction],
    cfg: &MoffleConfig,
    stream: &RngStream,
) -> Result<MoffleRun> {
    for r in rewards {
        r.validate(mdp)?;
        if r.horizon() != mdp.horizon() {
            return Err(Error::ShapeMismatch(
                "rewards must cover every level".into(),
            ));
        }
    }
    let derived = cfg.derive(class.dim(), mdp.num_actions(), mdp.horizon(), mdp.eta_min())?;
    let out = explore(mdp, class, cfg, &derived, stream)?;
    let (phi_bar, learn_reports) =
        learn_features(mdp, class, rewards, &out.datasets, cfg, &derived, stream)?;
    Ok(MoffleRun {
        derived,
        cover: out.cover,
        datasets: out.datasets,
        phi_hat: out.phi_hat,
        phi_bar,
        explore_reports: out.reports,
        learn_reports,
        n_plan: cfg.n_plan,
    })
}

/// Function class for downstream planning.
#[derive(Debug, Clone, Copy)]
pub enum Downstream<'a> {
    /// One learned feature per level.
    Representation {
        features: &'a [FeatureMap],
        radius: Option<f64>,
    },
    /// The whole candidate class.
    FullClass(&'a FeatureClass),
}

/// FQI on the planning data with the requested class.
pub fn plan_downstream(
    mdp: &LatentLowRankMDP,
    datasets: &[TransitionDataset],
    target: Downstream,
    reward: &RewardFunction,
) -> Result<FqiSolution> {
    let (classes, variant): (Vec<&[FeatureMap]>, FqiVariant) = match target {
        Downstream::Representation { features, radius } => (
            features.iter().map(std::slice::from_ref).collect(),
            FqiVariant::Representation { radius },
        ),
        Downstream::FullClass(class) => (
            class.levels().iter().map(Vec::as_slice).collect(),
            FqiVariant::FullClass,
        ),
    };
    let ctx = PlanningContext::from_datasets(mdp, datasets, classes)?;
    fqi(&ctx, reward, variant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suboptimality {
    pub optimal: f64,
    pub achieved: f64,
    pub gap: f64,
}

/// Exact `v* - v^pi`.
pub fn suboptimality(
    mdp: &LatentLowRankMDP,
    policy: &Policy,
    reward: &RewardFunction,
) -> Result<Suboptimality> {
    let optimal = value_iteration(mdp, reward)?.value;
    let achieved = exact_policy_value(mdp, policy, reward)?;
    Ok(Suboptimality {
        optimal,
        achieved,
        gap: optimal - achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::test_envs::random_mdp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> MoffleConfig {
        MoffleConfig {
            n_phi_hat: 2000,
            n_ell: 2000,
            n_phi_bar: 2000,
            n_plan: 2000,
            restarts: 4,
            max_steps: 20,
            ..MoffleConfig::default()
        }
    }

    fn random_reward(rng: &mut ChaCha8Rng, mdp: &LatentLowRankMDP) -> RewardFunction {
        let tables = (0..mdp.horizon())
            .map(|h| {
                (0..mdp.num_states(h) * mdp.num_actions())
                    .map(|_| rng.random())
                    .collect()
            })
            .collect();
        RewardFunction::new(mdp.num_actions(), tables, "r").unwrap()
    }

    #[test]
    fn single_level_cover_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(&mut rng, 1, 2, 4, 2);
        let class = FeatureClass::singleton_star(&mdp);
        let cfg = small_cfg();
        let derived = cfg.derive(2, 2, 1, mdp.eta_min()).unwrap();
        let out = explore(&mdp, &class, &cfg, &derived, &RngStream::new(3)).unwrap();
        assert!(out.cover.policies.iter().all(Option::is_none));
        assert_eq!(out.datasets[0].provenance.policy, "rho_-3^+3");
        assert_eq!(
            out.cover.exploratory(0).unwrap(),
            crate::mdp::MixturePolicy::uniform(2, 1)
        );
    }

    #[test]
    fn singleton_class_gives_star_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = random_mdp(&mut rng, 4, 2, 5, 2);
        let class = FeatureClass::singleton_star(&mdp);
        let r = random_reward(&mut rng, &mdp);
        let run = moffle(&mdp, &class, &[r], &small_cfg(), &RngStream::new(9)).unwrap();
        assert_eq!(run.phi_bar, vec![0; 4]);
        assert_eq!(run.phi_hat, vec![0; 4]);
        // Only level 0 needs a planner when H = 4 and the offset is 3.
        assert!(run.cover.policies[0].is_some());
        assert!(run.cover.policies[1..].iter().all(Option::is_none));
        assert_eq!(run.datasets[3].provenance.policy, "rho_0^+3");
    }

    #[test]
    fn zero_reward_is_trivially_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mdp = random_mdp(&mut rng, 3, 2, 5, 3);
        let class = FeatureClass::singleton_star(&mdp);
        let zero = RewardFunction::zero(&mdp, 3);
        let run = moffle(
            &mdp,
            &class,
            std::slice::from_ref(&zero),
            &small_cfg(),
            &RngStream::new(2),
        )
        .unwrap();
        let maps = run.phi_bar_maps(&class);
        let sol = plan_downstream(
            &mdp,
            &run.planning_datasets(),
            Downstream::Representation {
                features: &maps,
                radius: None,
            },
            &zero,
        )
        .unwrap();
        let s = suboptimality(&mdp, &sol.policy, &zero).unwrap();
        assert_eq!(s.optimal, 0.0);
        assert_eq!(s.gap, 0.0);
    }

    #[test]
    fn downstream_variants_agree_with_star_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mdp = random_mdp(&mut rng, 3, 2, 6, 3);
        let class = FeatureClass::singleton_star(&mdp);
        let r = random_reward(&mut rng, &mdp);
        let cfg = MoffleConfig {
            n_plan: 5000,
            ..small_cfg()
        };
        let run = moffle(
            &mdp,
            &class,
            std::slice::from_ref(&r),
            &cfg,
            &RngStream::new(4),
        )
        .unwrap();
        let data = run.planning_datasets();
        let maps = run.phi_bar_maps(&class);
        let rep = plan_downstream(
            &mdp,
            &data,
            Downstream::Representation {
                features: &maps,
                radius: None,
            },
            &r,
        )
        .unwrap();
        let full = plan_downstream(&mdp, &data, Downstream::FullClass(&class), &r).unwrap();
        let a = suboptimality(&mdp, &rep.policy, &r).unwrap();
        let b = suboptimality(&mdp, &full.policy, &r).unwrap();
        assert!(a.gap <= 0.3, "{a:?}");
        assert!(b.gap <= 0.3, "{b:?}");
        assert!((a.achieved - b.achieved).abs() <= 0.15);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mdp = random_mdp(&mut rng, 4, 2, 4, 2);
        let class = FeatureClass::singleton_star(&mdp);
        let r = random_reward(&mut rng, &mdp);
        let a = moffle(
            &mdp,
            &class,
            std::slice::from_ref(&r),
            &small_cfg(),
            &RngStream::new(1),
        )
        .unwrap();
        let b = moffle(
            &mdp,
            &class,
            std::slice::from_ref(&r),
            &small_cfg(),
            &RngStream::new(1),
        )
        .unwrap();
        assert_eq!(a.cover, b.cover);
        assert_eq!(a.datasets, b.datasets);
    }

    #[test]
    fn simplex_mode_uses_offset_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = random_mdp(&mut rng, 3, 2, 4, 2);
        let class = FeatureClass::singleton_star(&mdp);
        let cfg = MoffleConfig {
            simplex: true,
            ..small_cfg()
        };
        let run = moffle(&mdp, &class, &[], &cfg, &RngStream::new(1)).unwrap();
        assert_eq!(run.cover.offset, 2);
        assert!(run.cover.policies[0].is_some());
        assert_eq!(run.datasets[2].provenance.policy, "rho_0^+2");
        assert_eq!(run.explore_reports[0].oracle, "minmaxmin");
    }
}
