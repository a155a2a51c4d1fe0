use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn radopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radopf")).args(args).output().expect("binary runs")
}

fn json_without_timing(text: &str) -> Value {
    let mut v: Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn margin_prints_json_to_stdout() {
    let out = radopf(&["--dataset", "sce56", "margin"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["network"], "sce56");
    assert_eq!(v["margin"]["eta_star"]["kind"], "finite");
    let eta = v["margin"]["eta_star"]["value"].as_f64().unwrap();
    assert!(eta > 1.0 && eta < 2.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta*"));
}

#[test]
fn solve_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = radopf(&[
        "--dataset",
        "sce47",
        "--out",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "solve",
        "--variant",
        "socpm",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["solve"]["status"], "Optimal");
    assert_eq!(v["solve"]["exact"], true);
    let table = std::fs::read_to_string(&csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("bus,p,q,P,Q,v,ell"));
    assert_eq!(lines.count(), 47);
}

#[test]
fn errors_exit_with_two() {
    assert_eq!(radopf(&["--dataset", "sce99", "margin"]).status.code(), Some(2));
    assert_eq!(radopf(&["margin"]).status.code(), Some(2));
    assert_eq!(radopf(&["--network", "/nonexistent.net", "margin"]).status.code(), Some(2));
    assert_eq!(radopf(&["--dataset", "sce47", "margin", "--tol", "-1"]).status.code(), Some(2));
}

#[test]
fn strict_flags_negative_results() {
    // C1 fails well above the margin
    let relaxed = radopf(&["--dataset", "sce56", "check-c1", "--eta", "5"]);
    assert_eq!(relaxed.status.code(), Some(0));
    let strict = radopf(&["--dataset", "sce56", "--strict", "check-c1", "--eta", "5"]);
    assert_eq!(strict.status.code(), Some(1));
    let fine = radopf(&["--dataset", "sce56", "--strict", "check-c1", "--eta", "1"]);
    assert_eq!(fine.status.code(), Some(0));
}

#[test]
fn gap_report_is_reproducible() {
    let args = ["--dataset", "sce47", "gap", "--samples", "40", "--seed", "5"];
    let a = radopf(&args);
    let b = radopf(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(
        json_without_timing(&String::from_utf8_lossy(&a.stdout)),
        json_without_timing(&String::from_utf8_lossy(&b.stdout))
    );
    let v = json_without_timing(&String::from_utf8_lossy(&a.stdout));
    assert_eq!(v["seed"], 5);
    assert_eq!(v["gap"]["records"].as_array().unwrap().len(), 40);
}

#[test]
fn deterministic_json_drops_only_timing() {
    let ds = radopf_cli::embedded_dataset("sce56").unwrap();
    let a = radopf_cli::run_margin_experiment(&ds, 1e-3).unwrap();
    let b = radopf_cli::run_margin_experiment(&ds, 1e-3).unwrap();
    assert_eq!(a.deterministic_json(), b.deterministic_json());
    let v: Value = serde_json::from_str(&a.deterministic_json()).unwrap();
    assert!(v.get("timing").is_none());
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn user_network_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(
        dir.path(),
        "tiny.net",
        "[base]\ns_mva 1\nv_kv 12\n[substation]\nbus 0\nv0 1.0\n[lines]\nunits pu\n0 1 0.01 0.02\n1 2 0.02 0.02\n[devices]\n1 load 0.2 0.1\n2 load 0.1 0.05\n",
    );
    let out = radopf(&["--network", &net, "margin"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["margin"]["eta_star"]["kind"], "infinite");

    let solved = radopf(&["--network", &net, "solve", "--variant", "socp"]);
    let v: Value = serde_json::from_slice(&solved.stdout).unwrap();
    let state = write(dir.path(), "state.json", &v["solve"]["state"].to_string());
    let verified = radopf(&["--network", &net, "--strict", "verify", "--state", &state]);
    assert_eq!(verified.status.code(), Some(0), "{}", String::from_utf8_lossy(&verified.stderr));
    let v: Value = serde_json::from_slice(&verified.stdout).unwrap();
    assert_eq!(v["exactness"]["exact"], true);
}

#[test]
fn construct_and_powerflow_subcommands() {
    let out = radopf(&["--dataset", "sce56", "construct", "--delta", "0.001"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let before = v["construction"]["objective_before"].as_f64().unwrap();
    let after = v["construction"]["objective_after"].as_f64().unwrap();
    assert!(after < before);

    let out = radopf(&["--dataset", "sce56", "powerflow"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["powerflow"]["residuals"]["overall"].as_f64().unwrap() < 1e-9);
}
