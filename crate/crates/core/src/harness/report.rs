use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::driver::{CoverageReport, Derived, Suboptimality};
use crate::error::Result;
use crate::planners::TraceRow;
use crate::rep_learning::OracleReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    /// `(seed, stream)` of each derived stream.
    pub env: (u64, u64),
    pub features: (u64, u64),
    pub rewards: (u64, u64),
    pub moffle: (u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub horizon: usize,
    pub actions: usize,
    pub states: Vec<usize>,
    pub latents: usize,
    pub eta_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSummary {
    pub level: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_v_hat: f64,
    pub trace_gamma: f64,
    pub lambda_min_gamma: f64,
    pub floored: bool,
}

impl PlannerSummary {
    pub fn from_trace(level: usize, trace: &[TraceRow], converged: bool) -> Option<Self> {
        let last = trace.last()?;
        Some(Self {
            level,
            iterations: trace.len(),
            converged,
            final_v_hat: last.v_hat,
            trace_gamma: last.trace_gamma,
            lambda_min_gamma: last.lambda_min_gamma,
            floored: trace.iter().any(|r| r.floored),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub reward: usize,
    pub label: String,
    pub representation: Suboptimality,
    pub full_class: Suboptimality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Everything a stage computed. `wall_clock_seconds` and the oracles'
/// `elapsed_seconds` are the only nondeterministic fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stage: String,
    pub version: String,
    pub seeds: Seeds,
    pub env: Option<EnvSummary>,
    pub derived: Option<Derived>,
    pub explore: Vec<OracleReport>,
    pub planner: Vec<PlannerSummary>,
    pub cover_complete: Option<bool>,
    pub learn: Vec<OracleReport>,
    pub coverage: Option<CoverageReport>,
    pub downstream: Vec<DownstreamResult>,
    pub checks: Vec<CheckResult>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn new(stage: &str, seeds: Seeds) -> Self {
        Self {
            stage: stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            env: None,
            derived: None,
            explore: Vec::new(),
            planner: Vec::new(),
            cover_complete: None,
            learn: Vec::new(),
            coverage: None,
            downstream: Vec::new(),
            checks: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The deterministic content as `phase,index,metric,value` rows.
    pub fn metrics(&self) -> Metrics {
        let mut m = Metrics::default();
        if let Some(e) = &self.env {
            m.push("env", 0, "horizon", e.horizon as f64);
            m.push("env", 0, "actions", e.actions as f64);
            m.push("env", 0, "latents", e.latents as f64);
            m.push("env", 0, "eta_min", e.eta_min);
        }
        if let Some(d) = &self.derived {
            m.push("derived", 0, "beta", d.beta);
            m.push("derived", 0, "kappa", d.kappa);
            m.push("derived", 0, "eps_reg", d.eps_reg);
            m.push("derived", 0, "eps_apx", d.eps_apx);
            m.push("derived", 0, "offset", d.offset as f64);
        }
        for (phase, reports) in [("explore", &self.explore), ("learn", &self.learn)] {
            for r in reports {
                m.push(phase, r.level, "chosen", r.chosen as f64);
                m.push(phase, r.level, "objective", r.objective);
                m.push(phase, r.level, "iterations", r.iterations as f64);
                m.push(
                    phase,
                    r.level,
                    "budget_exhausted",
                    f64::from(u8::from(r.budget_exhausted)),
                );
                m.push(phase, r.level, "search_gap", r.search_gap);
            }
        }
        for p in &self.planner {
            m.push("planner", p.level, "iterations", p.iterations as f64);
            m.push(
                "planner",
                p.level,
                "converged",
                f64::from(u8::from(p.converged)),
            );
            m.push("planner", p.level, "final_v_hat", p.final_v_hat);
            m.push("planner", p.level, "trace_gamma", p.trace_gamma);
            m.push("planner", p.level, "lambda_min_gamma", p.lambda_min_gamma);
        }
        if let Some(c) = &self.coverage {
            for l in &c.levels {
                m.push(
                    "coverage",
                    l.level,
                    "kappa_k",
                    l.kappa_k.unwrap_or(f64::INFINITY),
                );
                m.push("coverage", l.level, "latent_min", l.latent_min);
            }
            m.push("coverage", 0, "latent_threshold", c.latent_threshold);
        }
        for d in &self.downstream {
            m.push("downstream", d.reward, "optimal", d.representation.optimal);
            m.push(
                "downstream",
                d.reward,
                "representation_value",
                d.representation.achieved,
            );
            m.push(
                "downstream",
                d.reward,
                "representation_gap",
                d.representation.gap,
            );
            m.push(
                "downstream",
                d.reward,
                "full_class_value",
                d.full_class.achieved,
            );
            m.push("downstream", d.reward, "full_class_gap", d.full_class.gap);
        }
        for (i, c) in self.checks.iter().enumerate() {
            m.push("check", i, &c.name, c.value);
            m.push(
                "check",
                i,
                &format!("{}_passed", c.name),
                f64::from(u8::from(c.passed)),
            );
        }
        m
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub rows: Vec<(String, usize, String, f64)>,
}

impl Metrics {
    pub fn push(&mut self, phase: &str, index: usize, metric: &str, value: f64) {
        self.rows
            .push((phase.to_string(), index, metric.to_string(), value));
    }

    /// CSV with header `phase,index,metric,value`; floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "phase,index,metric,value")?;
        for (phase, index, metric, value) in &self.rows {
            writeln!(w, "{phase},{index},{metric},{value:?}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_round_trip() {
        let mut m = Metrics::default();
        m.push("a", 0, "x", 0.1 + 0.2);
        m.push("a", 1, "y", 1.0);
        m.push("a", 2, "z", f64::INFINITY);
        let text = m.to_csv_string();
        assert_eq!(
            text,
            "phase,index,metric,value\na,0,x,0.30000000000000004\na,1,y,1.0\na,2,z,inf\n"
        );
        let v: f64 = "0.30000000000000004".parse().unwrap();
        assert_eq!(v, 0.1 + 0.2);
    }
}
