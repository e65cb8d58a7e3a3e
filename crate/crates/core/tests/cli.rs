use std::path::Path;
use std::process::{Command, Output};

use cgflow_core::cli::RunConfig;

fn cgflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgflow"))
        .current_dir(dir)
        .env("CGFLOW_LOG", "error")
        .args(args)
        .output()
        .expect("spawn cgflow")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = RunConfig::default();
    cfg.seed = 11;
    cfg.stateflow.dataset_size = 300;
    cfg.stateflow.iters = 30;
    cfg.stateflow.batch = 16;
    cfg.policy.iters = 10;
    cfg.policy.batch = 16;
    cfg.policy.tv_every = 5;
    cfg.paths.out_dir = "run".into();
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn first_line(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for cmd in [
        vec!["gen-data"],
        vec!["train-stateflow"],
        vec!["train-policy"],
        vec!["sample", "-n", "200", "--threads", "2"],
        vec!["oracle"],
        vec!["evaluate"],
    ] {
        let mut args = vec!["--config", cfg];
        args.extend(&cmd);
        let out = cgflow(dir.path(), &args);
        assert!(out.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(summary.is_object(), "{cmd:?}");
    }
    let run = dir.path().join("run");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_samples"].as_u64(), Some(200));
    let tv = report["tv_vs_oracle"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&tv));

    let expected_hash = RunConfig::load(&dir.path().join("config.json")).unwrap().hash();
    for name in ["dataset.jsonl", "samples.jsonl", "oracle.jsonl", "stateflow_metrics.jsonl", "policy_metrics.jsonl"] {
        let h = first_line(&run.join(name));
        assert_eq!(h["header"]["config_hash"].as_str(), Some(expected_hash.as_str()), "{name}");
        assert_eq!(h["header"]["library_hash"].as_str().map(str::len), Some(64), "{name}");
    }
}

#[test]
fn gen_data_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let read = |out: &str| std::fs::read_to_string(dir.path().join(out).join("dataset.jsonl")).unwrap();
    let records = |text: String| text.lines().skip(1).map(str::to_owned).collect::<Vec<_>>();
    assert!(cgflow(dir.path(), &["--config", cfg, "--out", "a", "gen-data"]).status.success());
    let first = read("a");
    assert!(cgflow(dir.path(), &["--config", cfg, "--out", "a", "gen-data"]).status.success());
    assert!(first == read("a"), "rerun changed the dataset");
    assert!(cgflow(dir.path(), &["--config", cfg, "--out", "c", "--seed", "12", "gen-data"]).status.success());
    assert!(records(first) != records(read("c")), "seed override had no effect");
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();

    let out = cgflow(dir.path(), &["--config", "missing.json", "gen-data"]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "missing_file");

    let out = cgflow(dir.path(), &["--config", cfg, "train-stateflow"]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(dir.path().join("bad.json"), r#"{"schedule": {"lambda": 0.45, "t_window": 0.4, "n_steps": 20, "max_components": 3}}"#).unwrap();
    let out = cgflow(dir.path(), &["--config", "bad.json", "gen-data"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "schedule");

    assert_eq!(cgflow(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(cgflow(dir.path(), &["--threads", "0", "gen-data"]).status.code(), Some(2));
    assert_eq!(cgflow(dir.path(), &["--help"]).status.code(), Some(0));

    std::fs::create_dir_all(dir.path().join("run")).unwrap();
    std::fs::write(dir.path().join("run/dataset.jsonl"), "not json\n").unwrap();
    let out = cgflow(dir.path(), &["--config", cfg, "train-stateflow"]);
    assert_eq!(out.status.code(), Some(4));
}
