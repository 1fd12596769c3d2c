use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_cgmcts");
const ARTIFACTS: [&str; 4] = ["runlog.ndjson", "library.json", "best_workflow.json", "summary.json"];

fn cgmcts(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cgmcts(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of_failure(args: &[&str]) -> String {
    let out = cgmcts(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"budget": {"rounds": 4, "simulations_per_round": 4, "max_candidates_per_expansion": 6, "seed": 0}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_is_byte_for_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let stdout = ok(&["run", "--seed", "7", "--out", s(&a)]);
    assert!(stdout.contains("best validation reward"), "{stdout}");
    ok(&["run", "--seed", "7", "--out", s(&b)]);
    for f in ARTIFACTS {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty(), "{f} empty");
        assert_eq!(x, y, "{f} differs between identical runs");
    }
}

#[test]
fn all_stages_off_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("off.json");
    fs::write(
        &cfg,
        r#"{"stages": {"selection": false, "expansion": false, "simulation": false, "backprop": false}}"#,
    )
    .unwrap();
    let err = stderr_of_failure(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(err.contains("stage"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.json");
    fs::write(&cfg, r#"{"budgett": {"rounds": 3}}"#).unwrap();
    let err = stderr_of_failure(&["run", "--config", s(&cfg)]);
    assert!(err.contains("budgett"), "{err}");
}

#[test]
fn report_prints_pruning_and_variance_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", "--config", &cfg, "--seed", "1", "--out", s(&a)]);
    ok(&["run", "--config", &cfg, "--seed", "2", "--out", s(&b)]);
    let (la, lb) = (a.join("runlog.ndjson"), b.join("runlog.ndjson"));
    let table = ok(&["report", s(&la), s(&lb), "--config", &cfg]);
    assert!(table.contains("pruned") && table.contains("rate"), "{table}");
    assert!(table.contains("variance ratio"), "{table}");

    let json = ok(&["report", s(&la), "--json"]);
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    let r = &parsed[0];
    let rate = r["pruning_rate"].as_f64().unwrap();
    let (pruned, proposed) = (r["pruned"].as_f64().unwrap(), r["proposed"].as_f64().unwrap());
    assert!((rate - pruned / proposed).abs() < 1e-12);
    assert_eq!(r["round_scores"].as_array().unwrap().len(), 4);
}

#[test]
fn report_rejects_malformed_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.ndjson");
    fs::write(&log, "{not json}\n").unwrap();
    let err = stderr_of_failure(&["report", s(&log)]);
    assert!(err.contains("bad.ndjson"), "{err}");
}

#[test]
fn exported_target_round_trips_and_solves_its_suite() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("target.json");
    let second = dir.path().join("again.json");
    ok(&["export", "--seed", "3", "--out", s(&first)]);
    ok(&["export", "--seed", "3", "--workflow", s(&first), "--out", s(&second)]);
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

    // start the search from the hidden target itself: it must score perfectly
    let cfg = dir.path().join("from_target.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"initial_program_file": {}, "budget": {{"rounds": 1, "simulations_per_round": 1, "max_candidates_per_expansion": 2, "seed": 3}}}}"#,
            serde_json::to_string(s(&first)).unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&["run", "--config", s(&cfg), "--seed", "3", "--out", s(&out)]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["best_validation_reward"].as_f64(), Some(1.0));
    assert_eq!(summary["test_accuracy"].as_f64(), Some(1.0));
}

#[test]
fn invalid_workflow_is_not_exported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    // add with a single operand
    fs::write(
        &bad,
        r#"{"nodes": [{"id": 0, "op": "input"}, {"id": 1, "op": "add"}], "edges": [{"from": 0, "to": 1, "slot": 0}], "roots": [0], "output": 1}"#,
    )
    .unwrap();
    let out = dir.path().join("out.json");
    stderr_of_failure(&["export", "--workflow", s(&bad), "--out", s(&out)]);
    assert!(!out.exists());
}

#[test]
fn ablate_writes_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("abl");
    let stdout = ok(&["ablate", "--config", &cfg, "--out", s(&out)]);
    assert!(stdout.contains("11 cells, 0 audit violations"), "{stdout}");
    for cell in ["full", "units-only", "magnitude-only", "selection-only", "backprop-only"] {
        assert!(out.join(cell).join("runlog.ndjson").is_file(), "{cell}");
    }
}

#[test]
fn unreachable_external_executor_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let err = stderr_of_failure(&[
        "run",
        "--executor",
        "external:http://127.0.0.1:9/",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn external_http_executor_matches_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut server = Command::new(BIN)
        .args(["serve", "--config", &cfg, "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("server announces its address").to_string();

    let (ext, local) = (dir.path().join("ext"), dir.path().join("local"));
    let executor = format!("external:{url}");
    let result = cgmcts(&["run", "--config", &cfg, "--executor", &executor, "--out", s(&ext)]);
    server.kill().unwrap();
    server.wait().unwrap();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    ok(&["run", "--config", &cfg, "--out", s(&local)]);

    // the search itself cannot tell the transports apart
    let read = |d: &Path, f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(read(&ext, "runlog.ndjson"), read(&local, "runlog.ndjson"));
    assert_eq!(read(&ext, "best_workflow.json"), read(&local, "best_workflow.json"));
}

#[test]
fn external_exec_executor_over_stdio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let executor = format!("external:exec:{BIN} serve --stdio --config {cfg}");
    let (ext, local) = (dir.path().join("ext"), dir.path().join("local"));
    ok(&["run", "--config", &cfg, "--executor", &executor, "--out", s(&ext)]);
    ok(&["run", "--config", &cfg, "--out", s(&local)]);
    assert_eq!(
        fs::read(ext.join("runlog.ndjson")).unwrap(),
        fs::read(local.join("runlog.ndjson")).unwrap()
    );
}
