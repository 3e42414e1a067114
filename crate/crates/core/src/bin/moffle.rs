use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use moffle::harness::{ExperimentConfig, Pipeline, RunReport, Stage, KEYS};
use moffle::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    GenEnv,
    GenFeatures,
    Explore,
    Learn,
    Plan,
    Eval,
    Verify,
    E2e,
    /// Print the documented configuration keys.
    Keys,
}

/// Representation learning and reward-free exploration on synthetic
/// low-rank MDPs.
#[derive(Debug, Parser)]
#[command(name = "moffle", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; takes precedence over the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// `key=value`, applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn stage(c: Command) -> Option<Stage> {
    Some(match c {
        Command::GenEnv => Stage::GenEnv,
        Command::GenFeatures => Stage::GenFeatures,
        Command::Explore => Stage::Explore,
        Command::Learn => Stage::Learn,
        Command::Plan => Stage::Plan,
        Command::Eval => Stage::Eval,
        Command::Verify => Stage::Verify,
        Command::E2e => Stage::E2e,
        Command::Keys => return None,
    })
}

fn summarize(report: &RunReport) {
    if let Some(e) = &report.env {
        println!(
            "env: H={} K={} d={} eta_min={:.4}",
            e.horizon, e.actions, e.latents, e.eta_min
        );
    }
    if let Some(d) = &report.derived {
        println!(
            "derived: beta={:.4} kappa={:.4} eps_reg={:.4} eps_apx={:.4} offset={}",
            d.beta, d.kappa, d.eps_reg, d.eps_apx, d.offset
        );
    }
    for p in &report.planner {
        println!(
            "planner level {}: {} iterations, v_hat={:.4}, converged={}",
            p.level, p.iterations, p.final_v_hat, p.converged
        );
    }
    if !report.learn.is_empty() {
        let chosen: Vec<usize> = report.learn.iter().map(|r| r.chosen).collect();
        println!("phi_bar: {chosen:?}");
    }
    for d in &report.downstream {
        println!(
            "{}: optimal={:.4} representation gap={:.4} full-class gap={:.4}",
            d.label, d.representation.optimal, d.representation.gap, d.full_class.gap
        );
    }
    for c in &report.checks {
        println!(
            "{} {}: {} (tolerance {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail,
            c.tolerance
        );
    }
    println!("wall clock: {:.2}s", report.wall_clock_seconds);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(stage) = stage(cli.command) else {
        for (key, doc) in KEYS {
            println!("{key:32} {doc}");
        }
        return ExitCode::SUCCESS;
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = match ExperimentConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match Pipeline::for_stage(cfg, &cli.out, stage).run(stage) {
        Ok(report) => {
            summarize(&report);
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
