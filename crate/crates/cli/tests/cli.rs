use std::process::{Command, Output};

fn grouplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grouplab")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn group_build_and_spectral() {
    let out = grouplab(&["group", "build", "--p", "2", "--level", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["order"], 168);
    assert_eq!(v["matches"], true);
    let out = grouplab(&["spectral"]);
    assert_eq!(out.status.code(), Some(0));
    let lambda = json(&out)["lambda1"].as_f64().unwrap();
    assert!((lambda - (6.0 - 2.0 * 2f64.sqrt())).abs() < 1e-9);
}

#[test]
fn optimize_writes_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c4.emb");
    let out = grouplab(&["distortion", "optimize", "--metric", "cycle:4", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let d = json(&out)["distortion"].as_f64().unwrap();
    assert!((d - 2f64.sqrt()).abs() < 1e-3);
    let out = grouplab(&["distortion", "profile", "--metric", "cycle:4", "--embedding", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("t,rho\n"));
}

#[test]
fn exit_codes_for_bad_input() {
    let out = grouplab(&["pipeline", "run", "--set", "pipeline.rho=t +* 2", "--out", "unused"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset 3"));
    assert_eq!(grouplab(&["--set", "nope.key=1", "spectral"]).status.code(), Some(3));
    assert_eq!(grouplab(&["distortion", "optimize", "--metric", "torus:4"]).status.code(), Some(3));
    assert_eq!(grouplab(&["imbed-derived", "--group", "Q8"]).status.code(), Some(3));
    assert_eq!(grouplab(&["pipeline", "run", "--format", "xml", "--out", "unused"]).status.code(), Some(3));
}

#[test]
fn partial_pipeline_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = grouplab(&[
        "pipeline",
        "run",
        "--set",
        "pipeline.family=sl3:2:1,sl3:3:1",
        "--set",
        "pipeline.rounds=1",
        "--set",
        "pipeline.rho=t/1000000",
        "--format",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "ledger.json", "ledger.csv", "config.snapshot", "certificates/sl3-p2-l1.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "global.budget_elements = 100\n").unwrap();
    assert_eq!(grouplab(&["--config", cfg.to_str().unwrap(), "group", "build"]).status.code(), Some(3));
    let out = grouplab(&["--config", cfg.to_str().unwrap(), "--budget-elements", "1000", "group", "build"]);
    assert_eq!(out.status.code(), Some(0));
}
