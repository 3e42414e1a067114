//! Pipeline stages and the run-directory layout.
//!
//! ```text
//! <out>/config.txt                      effective configuration
//! <out>/env.json
//! <out>/features/level{h}_{i}.json
//! <out>/features/star.json              index of phi* per level (test sidecar)
//! <out>/rewards/reward{r}.json
//! <out>/datasets/level{h}.csv
//! <out>/cover.json
//! <out>/learned/phi_hat.json, phi_bar.json
//! <out>/reports/explore_level{h}.json, learn_level{h}.json
//! <out>/traces/elliptical_level{h}.csv
//! <out>/policies/reward{r}_{representation,full_class}.json
//! <out>/report.json, metrics.csv
//! ```
//!
//! A stage recomputes its own outputs and everything after it; earlier
//! artifacts are read from the run directory when present and recomputed
//! otherwise.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::checks;
use super::config::ExperimentConfig;
use super::generate::{generate_env, generate_feature_class, generate_rewards};
use super::report::{DownstreamResult, EnvSummary, PlannerSummary, RunReport, Seeds};
use crate::driver::{
    explore, learn_features, plan_downstream, suboptimality, verify_cover, Derived, Downstream,
    PolicyCover,
};
use crate::error::{Error, Result};
use crate::function_spaces::{FeatureClass, FeatureMap, RewardFunction};
use crate::mdp::{LatentLowRankMDP, Policy, TransitionDataset};
use crate::planners::write_trace_csv;
use crate::rep_learning::OracleReport;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    GenEnv,
    GenFeatures,
    Explore,
    Learn,
    Plan,
    Eval,
    Verify,
    E2e,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::GenEnv,
        Stage::GenFeatures,
        Stage::Explore,
        Stage::Learn,
        Stage::Plan,
        Stage::Eval,
        Stage::Verify,
        Stage::E2e,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenEnv => "gen-env",
            Stage::GenFeatures => "gen-features",
            Stage::Explore => "explore",
            Stage::Learn => "learn",
            Stage::Plan => "plan",
            Stage::Eval => "eval",
            Stage::Verify => "verify",
            Stage::E2e => "e2e",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn env(&self) -> PathBuf {
        self.root.join("env.json")
    }

    pub fn feature(&self, h: usize, i: usize) -> PathBuf {
        self.root
            .join("features")
            .join(format!("level{h}_{i}.json"))
    }

    pub fn star(&self) -> PathBuf {
        self.root.join("features").join("star.json")
    }

    pub fn reward(&self, r: usize) -> PathBuf {
        self.root.join("rewards").join(format!("reward{r}.json"))
    }

    pub fn dataset(&self, h: usize) -> PathBuf {
        self.root.join("datasets").join(format!("level{h}.csv"))
    }

    pub fn cover(&self) -> PathBuf {
        self.root.join("cover.json")
    }

    pub fn phi_hat(&self) -> PathBuf {
        self.root.join("learned").join("phi_hat.json")
    }

    pub fn phi_bar(&self) -> PathBuf {
        self.root.join("learned").join("phi_bar.json")
    }

    pub fn explore_report(&self, h: usize) -> PathBuf {
        self.root
            .join("reports")
            .join(format!("explore_level{h}.json"))
    }

    pub fn learn_report(&self, h: usize) -> PathBuf {
        self.root
            .join("reports")
            .join(format!("learn_level{h}.json"))
    }

    pub fn trace(&self, h: usize) -> PathBuf {
        self.root
            .join("traces")
            .join(format!("elliptical_level{h}.csv"))
    }

    pub fn policy(&self, r: usize, variant: &str) -> PathBuf {
        self.root
            .join("policies")
            .join(format!("reward{r}_{variant}.json"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &serde_json::to_string_pretty(value)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Stream labels under the master seed.
const ENV_STREAM: u64 = 1;
const FEATURE_STREAM: u64 = 2;
const REWARD_STREAM: u64 = 3;
const MOFFLE_STREAM: u64 = 4;
const CHECK_STREAM: u64 = 5;

#[derive(Debug, Clone)]
struct Explored {
    cover: PolicyCover,
    datasets: Vec<TransitionDataset>,
    phi_hat: Vec<usize>,
    reports: Vec<OracleReport>,
}

/// One invocation against a run directory (or purely in memory).
pub struct Pipeline {
    cfg: ExperimentConfig,
    paths: Option<RunPaths>,
    fresh_from: Stage,
    master: RngStream,
}

impl Pipeline {
    /// `paths = None` keeps everything in memory.
    pub fn new(cfg: ExperimentConfig, paths: Option<RunPaths>, fresh_from: Stage) -> Self {
        let master = RngStream::new(cfg.seed);
        Self {
            cfg,
            paths,
            fresh_from,
            master,
        }
    }

    /// Pipeline for a CLI stage: that stage and the ones after it are
    /// recomputed; `verify` only fills in what is missing and `e2e`
    /// recomputes everything.
    pub fn for_stage(cfg: ExperimentConfig, out: &Path, stage: Stage) -> Self {
        let fresh_from = match stage {
            Stage::E2e => Stage::GenEnv,
            s => s,
        };
        Self::new(cfg, Some(RunPaths::new(out)), fresh_from)
    }

    pub fn seeds(&self) -> Seeds {
        let pair = |s: RngStream| (s.seed, s.stream);
        Seeds {
            master: self.cfg.seed,
            env: pair(self.master.derive(ENV_STREAM)),
            features: pair(self.master.derive(FEATURE_STREAM)),
            rewards: pair(self.master.derive(REWARD_STREAM)),
            moffle: pair(self.master.derive(MOFFLE_STREAM)),
        }
    }

    /// Load instead of recomputing when `stage` precedes the requested one
    /// and every file in `files` exists.
    fn reuse(&self, stage: Stage, files: &[PathBuf]) -> bool {
        self.paths.is_some() && stage < self.fresh_from && files.iter().all(|p| p.exists())
    }

    fn save<F: FnOnce(&RunPaths) -> Result<()>>(&self, f: F) -> Result<()> {
        match &self.paths {
            Some(p) => f(p),
            None => Ok(()),
        }
    }

    fn env(&self) -> Result<LatentLowRankMDP> {
        if let Some(p) = &self.paths {
            if self.reuse(Stage::GenEnv, &[p.env()]) {
                return LatentLowRankMDP::from_json(&fs::read_to_string(p.env())?);
            }
        }
        let mdp = match &self.cfg.env_path {
            Some(path) => LatentLowRankMDP::from_json(&fs::read_to_string(path)?)?,
            None => generate_env(&self.cfg.env, &self.master.derive(ENV_STREAM))?,
        };
        self.save(|p| write_file(&p.env(), &mdp.to_json()?))?;
        Ok(mdp)
    }

    fn load_features(&self, p: &RunPaths, mdp: &LatentLowRankMDP) -> Result<FeatureClass> {
        let mut levels = Vec::with_capacity(mdp.horizon());
        for h in 0..mdp.horizon() {
            let mut maps = Vec::new();
            while p.feature(h, maps.len()).exists() {
                maps.push(FeatureMap::from_json(&fs::read_to_string(
                    p.feature(h, maps.len()),
                )?)?);
            }
            levels.push(maps);
        }
        let class = FeatureClass::new(levels)?;
        let star: Option<Vec<usize>> = read_json(&p.star())?;
        match star {
            Some(s) => class.with_star_indices(s),
            None => Ok(class),
        }
    }

    fn features(&self, mdp: &LatentLowRankMDP) -> Result<(FeatureClass, Vec<RewardFunction>)> {
        if let Some(p) = &self.paths {
            let mut files = vec![p.star()];
            files.extend((0..mdp.horizon()).map(|h| p.feature(h, 0)));
            files.extend((0..self.cfg.rewards.count).map(|r| p.reward(r)));
            if self.reuse(Stage::GenFeatures, &files) {
                let class = self.load_features(p, mdp)?;
                class.check_fits(mdp)?;
                let rewards = (0..self.cfg.rewards.count)
                    .map(|r| read_json(&p.reward(r)))
                    .collect::<Result<Vec<RewardFunction>>>()?;
                return Ok((class, rewards));
            }
        }
        let class =
            generate_feature_class(mdp, &self.cfg.features, &self.master.derive(FEATURE_STREAM))?;
        let rewards = generate_rewards(mdp, &self.cfg.rewards, &self.master.derive(REWARD_STREAM))?;
        self.save(|p| {
            if p.root.join("features").exists() {
                fs::remove_dir_all(p.root.join("features"))?;
            }
            for (h, maps) in class.levels().iter().enumerate() {
                for (i, m) in maps.iter().enumerate() {
                    write_file(&p.feature(h, i), &m.to_json()?)?;
                }
            }
            write_json(&p.star(), &class.star_indices())?;
            for (r, reward) in rewards.iter().enumerate() {
                write_json(&p.reward(r), reward)?;
            }
            Ok(())
        })?;
        Ok((class, rewards))
    }

    fn explore(
        &self,
        mdp: &LatentLowRankMDP,
        class: &FeatureClass,
        derived: &Derived,
    ) -> Result<Explored> {
        let horizon = mdp.horizon();
        if let Some(p) = &self.paths {
            let mut files = vec![p.cover(), p.phi_hat()];
            files.extend((0..horizon).map(|h| p.dataset(h)));
            files.extend((0..horizon).map(|h| p.explore_report(h)));
            if self.reuse(Stage::Explore, &files) {
                let cover = PolicyCover::from_json(&fs::read_to_string(p.cover())?)?;
                let datasets = (0..horizon)
                    .map(|h| TransitionDataset::read_csv(fs::File::open(p.dataset(h))?))
                    .collect::<Result<Vec<_>>>()?;
                for ds in &datasets {
                    ds.validate(mdp)?;
                }
                let reports = (0..horizon)
                    .map(|h| read_json(&p.explore_report(h)))
                    .collect::<Result<Vec<OracleReport>>>()?;
                return Ok(Explored {
                    cover,
                    datasets,
                    phi_hat: read_json(&p.phi_hat())?,
                    reports,
                });
            }
        }
        let out = explore(
            mdp,
            class,
            &self.cfg.moffle,
            derived,
            &self.master.derive(MOFFLE_STREAM),
        )
        .map_err(|e| e.in_stage("explore"))?;
        self.save(|p| {
            for (h, ds) in out.datasets.iter().enumerate() {
                if let Some(dir) = p.dataset(h).parent() {
                    fs::create_dir_all(dir)?;
                }
                ds.write_csv(fs::File::create(p.dataset(h))?)?;
                write_json(&p.explore_report(h), &out.reports[h])?;
                if !out.cover.traces[h].is_empty() {
                    if let Some(dir) = p.trace(h).parent() {
                        fs::create_dir_all(dir)?;
                    }
                    write_trace_csv(&out.cover.traces[h], fs::File::create(p.trace(h))?)?;
                }
            }
            write_file(&p.cover(), &out.cover.to_json()?)?;
            write_json(&p.phi_hat(), &out.phi_hat)
        })?;
        Ok(Explored {
            cover: out.cover,
            datasets: out.datasets,
            phi_hat: out.phi_hat,
            reports: out.reports,
        })
    }

    fn learn(
        &self,
        mdp: &LatentLowRankMDP,
        class: &FeatureClass,
        rewards: &[RewardFunction],
        datasets: &[TransitionDataset],
        derived: &Derived,
    ) -> Result<(Vec<usize>, Vec<OracleReport>)> {
        let horizon = mdp.horizon();
        if let Some(p) = &self.paths {
            let mut files = vec![p.phi_bar()];
            files.extend((0..horizon).map(|h| p.learn_report(h)));
            if self.reuse(Stage::Learn, &files) {
                let reports = (0..horizon)
                    .map(|h| read_json(&p.learn_report(h)))
                    .collect::<Result<Vec<OracleReport>>>()?;
                return Ok((read_json(&p.phi_bar())?, reports));
            }
        }
        let (phi_bar, reports) = learn_features(
            mdp,
            class,
            rewards,
            datasets,
            &self.cfg.moffle,
            derived,
            &self.master.derive(MOFFLE_STREAM),
        )
        .map_err(|e| e.in_stage("learn"))?;
        self.save(|p| {
            for (h, r) in reports.iter().enumerate() {
                write_json(&p.learn_report(h), r)?;
            }
            write_json(&p.phi_bar(), &phi_bar)
        })?;
        Ok((phi_bar, reports))
    }

    fn plan(
        &self,
        mdp: &LatentLowRankMDP,
        class: &FeatureClass,
        rewards: &[RewardFunction],
        datasets: &[TransitionDataset],
        phi_bar: &[usize],
    ) -> Result<Vec<(Policy, Policy)>> {
        if let Some(p) = &self.paths {
            let files: Vec<PathBuf> = (0..rewards.len())
                .flat_map(|r| [p.policy(r, "representation"), p.policy(r, "full_class")])
                .collect();
            if self.reuse(Stage::Plan, &files) {
                return (0..rewards.len())
                    .map(|r| {
                        Ok((
                            read_json(&p.policy(r, "representation"))?,
                            read_json(&p.policy(r, "full_class"))?,
                        ))
                    })
                    .collect();
            }
        }
        let n_plan = self.cfg.moffle.n_plan;
        let data: Vec<TransitionDataset> = datasets.iter().map(|d| d.head(n_plan)).collect();
        let maps: Vec<FeatureMap> = phi_bar
            .iter()
            .enumerate()
            .map(|(h, &i)| class.level(h)[i].clone())
            .collect();
        let mut out = Vec::with_capacity(rewards.len());
        for reward in rewards {
            let rep = plan_downstream(
                mdp,
                &data,
                Downstream::Representation {
                    features: &maps,
                    radius: self.cfg.moffle.representation_radius,
                },
                reward,
            )
            .map_err(|e| e.in_stage("plan"))?;
            let full = plan_downstream(mdp, &data, Downstream::FullClass(class), reward)
                .map_err(|e| e.in_stage("plan"))?;
            out.push((rep.policy, full.policy));
        }
        self.save(|p| {
            for (r, (rep, full)) in out.iter().enumerate() {
                write_json(&p.policy(r, "representation"), rep)?;
                write_json(&p.policy(r, "full_class"), full)?;
            }
            Ok(())
        })?;
        Ok(out)
    }

    /// Runs up to and including `stage`, persists the report and metrics,
    /// and returns the report.
    pub fn run(&self, stage: Stage) -> Result<RunReport> {
        let start = Instant::now();
        let mut report = RunReport::new(stage.name(), self.seeds());
        self.execute(stage, &mut report)?;
        report.wall_clock_seconds = start.elapsed().as_secs_f64();
        self.save(|p| {
            write_file(&p.config(), &self.cfg.to_text())?;
            write_json(&p.report(), &report)?;
            write_file(&p.metrics(), &report.metrics().to_csv_string())
        })?;
        Ok(report)
    }

    fn execute(&self, stage: Stage, report: &mut RunReport) -> Result<()> {
        let mdp = self.env().map_err(|e| e.in_stage("gen-env"))?;
        report.env = Some(EnvSummary {
            horizon: mdp.horizon(),
            actions: mdp.num_actions(),
            states: mdp.state_counts().to_vec(),
            latents: mdp.dim(),
            eta_min: mdp.eta_min(),
        });
        if stage == Stage::GenEnv {
            return Ok(());
        }
        let (class, rewards) = self
            .features(&mdp)
            .map_err(|e| e.in_stage("gen-features"))?;
        if stage == Stage::GenFeatures {
            return Ok(());
        }
        let derived =
            self.cfg
                .moffle
                .derive(class.dim(), mdp.num_actions(), mdp.horizon(), mdp.eta_min())?;
        report.derived = Some(derived.clone());
        let explored = self.explore(&mdp, &class, &derived)?;
        report.explore = explored.reports.clone();
        report.planner = explored
            .cover
            .traces
            .iter()
            .enumerate()
            .filter_map(|(h, t)| {
                PlannerSummary::from_trace(h, t, !explored.cover.capped_levels.contains(&h))
            })
            .collect();
        report.cover_complete = Some(explored.cover.complete());
        if stage == Stage::Explore {
            return Ok(());
        }
        let (phi_bar, learn_reports) =
            self.learn(&mdp, &class, &rewards, &explored.datasets, &derived)?;
        report.learn = learn_reports;
        if stage == Stage::Learn {
            return Ok(());
        }
        let policies = self.plan(&mdp, &class, &rewards, &explored.datasets, &phi_bar)?;
        if stage == Stage::Plan {
            return Ok(());
        }
        report.coverage = Some(verify_cover(
            &mdp,
            &explored.cover,
            derived.kappa,
            derived.eta_min,
        )?);
        for (r, (reward, (rep, full))) in rewards.iter().zip(&policies).enumerate() {
            report.downstream.push(DownstreamResult {
                reward: r,
                label: reward.label().to_string(),
                representation: suboptimality(&mdp, rep, reward)?,
                full_class: suboptimality(&mdp, full, reward)?,
            });
        }
        if stage != Stage::Verify {
            return Ok(());
        }

        let checks_stream = self.master.derive(CHECK_STREAM);
        let v = &self.cfg.verify;
        report.checks.push(checks::linearity(
            &mdp,
            v.linearity_samples,
            &checks_stream.derive(0),
        )?);
        report.checks.push(checks::norms(
            &mdp,
            v.linearity_samples,
            &checks_stream.derive(1),
        ));
        if !report.planner.is_empty() {
            report.checks.push(checks::planner_iterations(
                &report.planner,
                class.dim(),
                derived.beta,
            ));
            report.checks.push(checks::planner_bonus(
                &mdp,
                &class,
                &explored.cover,
                &explored.phi_hat,
                derived.beta,
            ));
        }
        report.checks.push(checks::coverage(
            report.coverage.as_ref().expect("computed above"),
        ));
        report.checks.push(checks::downstream(
            &report.downstream,
            mdp.horizon(),
            v.downstream_tol,
        ));
        if v.determinism {
            let mut first = report.clone();
            first.checks.clear();
            first.stage = Stage::E2e.name().to_string();
            let fresh = Pipeline::new(self.cfg.clone(), None, Stage::GenEnv);
            let mut second = RunReport::new(Stage::E2e.name(), self.seeds());
            fresh.execute(Stage::E2e, &mut second)?;
            report.checks.push(checks::determinism(
                &first.metrics().to_csv_string(),
                &second.metrics().to_csv_string(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(
            "env.horizon = 4\nenv.states = 4\nenv.latents = 2\nenv.eta_floor = 0.02\nfeatures.decoys = 1\n\
             moffle.n = 1500\nmoffle.restarts = 2\nmoffle.max_steps = 10\nrewards.count = 2\n",
        )
        .unwrap();
        cfg
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn staged_run_matches_e2e() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for stage in [
            Stage::GenEnv,
            Stage::GenFeatures,
            Stage::Explore,
            Stage::Learn,
            Stage::Plan,
            Stage::Eval,
        ] {
            Pipeline::for_stage(tiny(), a.path(), stage)
                .run(stage)
                .unwrap();
        }
        Pipeline::for_stage(tiny(), b.path(), Stage::E2e)
            .run(Stage::E2e)
            .unwrap();
        let ma = fs::read_to_string(a.path().join("metrics.csv")).unwrap();
        let mb = fs::read_to_string(b.path().join("metrics.csv")).unwrap();
        assert_eq!(ma, mb);
        for f in [
            "env.json",
            "cover.json",
            "datasets/level3.csv",
            "policies/reward1_full_class.json",
        ] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        assert!(a.path().join("traces/elliptical_level0.csv").exists());
        assert!(a.path().join("features/star.json").exists());
    }

    #[test]
    fn verify_runs_checks() {
        let dir = tempfile::tempdir().unwrap();
        let report = Pipeline::for_stage(tiny(), dir.path(), Stage::Verify)
            .run(Stage::Verify)
            .unwrap();
        let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"linearity"));
        assert!(names.contains(&"determinism"));
        let det = report
            .checks
            .iter()
            .find(|c| c.name == "determinism")
            .unwrap();
        assert!(det.passed, "{}", det.detail);
        assert!(
            report
                .checks
                .iter()
                .find(|c| c.name == "linearity")
                .unwrap()
                .passed
        );
    }

    #[test]
    fn eval_matches_recomputation_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = Pipeline::for_stage(tiny(), dir.path(), Stage::E2e)
            .run(Stage::E2e)
            .unwrap();
        let p = RunPaths::new(dir.path());
        let mdp = LatentLowRankMDP::from_json(&fs::read_to_string(p.env()).unwrap()).unwrap();
        let reward: RewardFunction = read_json(&p.reward(0)).unwrap();
        let policy: Policy = read_json(&p.policy(0, "representation")).unwrap();
        let v = crate::mdp::exact_policy_value(&mdp, &policy, &reward).unwrap();
        assert_eq!(v, report.downstream[0].representation.achieved);
    }
}
