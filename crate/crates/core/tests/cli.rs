use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn moffle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moffle"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "# small run\nenv.horizon = 3\nenv.states = 6\nmoffle.n = 2000\nrewards.count = 2\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn staged_commands_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    for stage in [
        "gen-env",
        "gen-features",
        "explore",
        "learn",
        "plan",
        "eval",
    ] {
        let o = moffle(&[stage, "--config", &cfg, "--seed", "3", "--out", out]);
        assert!(
            o.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = moffle(&["verify", "--config", &cfg, "--seed", "3", "--out", out]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS determinism"));
    assert!(!stdout.contains("FAIL"));
    let text = fs::read_to_string(Path::new(out).join("config.txt")).unwrap();
    assert!(text.contains("seed = 3"));
    assert!(text.contains("env.states = 6"));
    let metrics = fs::read_to_string(Path::new(out).join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("phase,index,metric,value\n"));
    assert!(metrics.contains("check,"));
}

#[test]
fn override_beats_file_and_seed_flag_beats_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let o = moffle(&[
        "gen-env",
        "--config",
        &cfg,
        "--override",
        "env.states=4",
        "--override",
        "seed=11",
        "--seed",
        "12",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(text.contains("env.states = 4"));
    assert!(text.contains("seed = 12"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(moffle(&["nonsense"]).status.code(), Some(2));
    assert_eq!(
        moffle(&["e2e", "--override", "moffle.eps=-1", "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        moffle(&["e2e", "--override", "no_equals", "--out", out])
            .status
            .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.cfg");
    assert_ne!(
        moffle(&["e2e", "--config", missing.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn tampered_artifacts_fail_verification_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let run = |stage: &str| {
        moffle(&[
            stage,
            "--config",
            &cfg,
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ])
    };
    assert!(run("e2e").status.success());
    assert_eq!(run("verify").status.code(), Some(0));

    // A stored oracle report that the seed does not reproduce.
    let path = out.join("reports/explore_level0.json");
    let mut report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let objective = report["objective"].as_f64().unwrap();
    report["objective"] = serde_json::json!(objective + 1.0);
    fs::write(&path, serde_json::to_string(&report).unwrap()).unwrap();

    let o = run("verify");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(1), "{stdout}");
    assert!(stdout.contains("FAIL determinism"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stage"], "verify");
}

#[test]
fn keys_lists_documented_configuration() {
    let o = moffle(&["keys"]);
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    for key in [
        "seed",
        "env.horizon",
        "moffle.oracle",
        "verify.downstream_tol",
    ] {
        assert!(s.lines().any(|l| l.starts_with(key)), "{key}");
    }
}
