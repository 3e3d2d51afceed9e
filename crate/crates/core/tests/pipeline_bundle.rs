use std::fs;
use std::path::Path;

use grouplab::pipeline::{run_pipeline, Config, PipelineError, ReportBundle, ReportFormat};

fn small_config(rho: &str, rounds: usize) -> Config {
    let mut cfg = Config::default();
    cfg.set("pipeline.family", "sl3:2:1,sl3:3:1").unwrap();
    cfg.set("pipeline.rho", rho).unwrap();
    cfg.set("pipeline.rounds", &rounds.to_string()).unwrap();
    cfg
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "certificates", "profiles"] {
        let d = dir.join(sub);
        let mut entries: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
        entries.sort();
        for p in entries {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn bundle_is_reproducible_and_round_trips() {
    // Two members support one round; the three-member default is exercised by the acceptance suite.
    let cfg = small_config("exp(10*t)", 1);
    let first = run_pipeline(&cfg, None).unwrap();
    let ledger = &first.bundle.document.ledger;
    assert!(first.complete(), "{:?}", ledger.limiting_constraint);
    assert_eq!(first.exit_code(), 0);
    assert_eq!(ledger.rows.len(), 1);
    assert!(ledger.verify(&first.rho).unwrap().is_empty());

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    first.bundle.write(a.path(), ReportFormat::Csv).unwrap();
    run_pipeline(&cfg, None).unwrap().bundle.write(b.path(), ReportFormat::Csv).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));

    let (back, format) = ReportBundle::read(a.path()).unwrap();
    assert_eq!(format, ReportFormat::Csv);
    back.write(c.path(), format).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(c.path()));
    assert_eq!(Config::parse(&back.snapshot).unwrap(), cfg);
}

#[test]
fn tampered_bundle_is_rejected() {
    let run = run_pipeline(&small_config("exp(10*t)", 1), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run.bundle.write(dir.path(), ReportFormat::Json).unwrap();
    assert!(!dir.path().join("ledger.csv").exists());
    let snap = dir.path().join("config.snapshot");
    let mut text = fs::read_to_string(&snap).unwrap();
    text.push_str("# edited\n");
    fs::write(&snap, text).unwrap();
    assert!(ReportBundle::read(dir.path()).is_err());
}

#[test]
fn slow_rho_gives_partial_ledger() {
    let run = run_pipeline(&small_config("t/1000000", 1), None).unwrap();
    let ledger = &run.bundle.document.ledger;
    assert!(!run.complete());
    assert_eq!(run.exit_code(), 2);
    assert!(ledger.rows.is_empty());
    assert!(ledger.limiting_constraint.is_some());
    assert!(ledger.verify(&run.rho).unwrap().is_empty());
}

#[test]
fn zero_rounds_and_bad_input() {
    let run = run_pipeline(&small_config("log(1+t)", 0), None).unwrap();
    assert!(run.complete());
    assert!(run.bundle.document.ledger.rows.is_empty());
    assert!(matches!(run_pipeline(&small_config("t +* 2", 1), None), Err(PipelineError::Rho(_))));
    assert_eq!(run_pipeline(&small_config("t", 2), None).err().map(|e| e.exit_code()), Some(3));
    let mut cfg = small_config("t", 1);
    cfg.set("pipeline.family", "sl3:4:1").unwrap();
    let Err(err) = run_pipeline(&cfg, None) else { panic!("p = 4 accepted") };
    assert_eq!(err.exit_code(), 3, "{err}");
}
