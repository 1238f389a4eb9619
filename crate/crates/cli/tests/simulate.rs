//! The `simulate` subcommand on the shipped scenario files.

use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn simulate(config: &std::path::Path) -> (Option<i32>, Value) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_padme"))
        .args(["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    let report = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    (status.code(), report)
}

#[test]
fn nb_three_stations_matches_the_oracle() {
    let (code, report) = simulate(&scenario("nb-3.json"));
    assert_eq!(code, Some(0));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["oracle_equal"], true);
    assert_eq!(report["final_status"], "Completed");
    assert_eq!(report["ledger"]["verdict"], "Ok");
    assert_eq!(report["canary"]["leaks"], Value::Array(vec![]));
}

#[test]
fn and_two_stations_reports_auc() {
    let (code, report) = simulate(&scenario("and-2.json"));
    assert_eq!(code, Some(0));
    assert_eq!(report["final_status"], "Completed");
    assert!(report["result_summary"]["metrics"]["auc"].is_string());
}

#[test]
fn a_rejecting_owner_ends_the_route() {
    let mut config: Value = serde_json::from_str(&std::fs::read_to_string(scenario("nb-3.json")).unwrap()).unwrap();
    config["stations"] = serde_json::json!([{}, {"owner_vote": "Reject"}, {}]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reject.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let (code, report) = simulate(&path);
    assert_eq!(code, Some(0));
    assert_eq!(report["final_status"], "Rejected");
    assert_eq!(report["results_available"], false);
    assert_eq!(report["result_summary"], Value::Null);
}
