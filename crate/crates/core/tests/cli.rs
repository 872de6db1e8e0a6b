use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_reluscape");
const SQUARE: &str = r#""problem": {"domain": {"a": 0, "b": 1, "d": 1}, "target": {"kind": "square"}}"#;

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("RELUSCAPE_OUT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn malformed_config_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"problem": {"domain": {"a": 0, "b": 1, "d": 1}, "target": {"kind": "square", "extra": 1}}}"#,
    );
    let o = run(&["risk", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("problem.target"), "{:?}", o);
}

#[test]
fn missing_config_file_exits_2() {
    let o = run(&["risk", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mismatched_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &format!(r#"{{{SQUARE}, "experiment": {{"kind": "sweep"}}}}"#));
    let o = run(&["trap-prob", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn trap_prob_prints_estimate_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{{SQUARE}, "init": "normal-unscaled", "experiment": {{"kind": "trap_prob", "samples": 20000}}, "seed": 4}}"#),
    );
    let out = dir.path().join("o");
    let o = run(&["trap-prob", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = stdout(&o);
    let p: f64 = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((p - 0.375).abs() < 0.02, "{text}");
    assert!(out.join("manifest.json").exists());
    assert!(out.join("trap_prob.json").exists());
}

#[test]
fn risk_of_width_zero_is_best_constant_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{{SQUARE}, "model": {{"kind": "shallow", "width": 0}}}}"#),
    );
    let out = dir.path().join("o");
    let o = run(&["risk", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let risk: f64 = stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((risk - 4.0 / 45.0).abs() < 1e-15);
    let r = run(&["report", out.join("manifest.json").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(stdout(&r).contains("replay identical"));
}

#[test]
fn tampered_output_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{{SQUARE}, "model": {{"kind": "shallow", "width": 0}}}}"#),
    );
    let out = dir.path().join("o");
    assert_eq!(
        run(&["risk", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let mp = out.join("manifest.json");
    let text = std::fs::read_to_string(&mp).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&mp, serde_json::to_string(&m).unwrap()).unwrap();
    let r = run(&["report", mp.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{{SQUARE}, "model": {{"kind": "shallow", "width": 0}}}}"#),
    );
    let o = Command::new(BIN)
        .args(["risk", "--config", &cfg])
        .env("RELUSCAPE_OUT", dir.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("env/risk/manifest.json").exists());
}

#[test]
fn embed_preserves_risk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{{SQUARE}, "experiment": {{"kind": "embed", "width": 4}}}}"#),
    );
    let theta = write(
        dir.path(),
        "t.json",
        r#"{"arch": {"kind": "shallow", "d": 1, "width": 1, "activation": {"kind": "relu"}}, "values": [1.0, -0.5, 1.0, 0.1]}"#,
    );
    let out = dir.path().join("o");
    let o = run(&["embed", "--config", &cfg, "--theta", &theta, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let e: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("embedded.json")).unwrap()).unwrap();
    assert_eq!(e["values"].as_array().unwrap().len(), 13);
}

#[test]
fn train_keeps_trapped_neurons_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(
            r#"{{{SQUARE}, "model": {{"kind": "shallow", "width": 6}}, "experiment": {{"kind": "train", "steps": 300, "cadence": 50}}, "seed": 12}}"#
        ),
    );
    let out = dir.path().join("o");
    let o = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let lines = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(lines.lines().count() >= 7);
}
