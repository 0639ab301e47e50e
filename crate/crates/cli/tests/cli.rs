use std::process::{Command, Output};

fn dcaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcaudit")).args(args).output().expect("binary runs")
}

#[test]
fn missing_scenario_is_a_config_error() {
    let out = dcaudit(&["audit", "weak", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ \"name\": ").unwrap();
    let out = dcaudit(&["audit", "weak", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("extra.json");
    std::fs::write(
        &path,
        r#"{"name":"x","witnesses":["x"],"collector":"board","requester":[],"environment":[],"surprise":1}"#,
    )
    .unwrap();
    let out = dcaudit(&["audit", "weak", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn strong_audit_refuses_requester_messages() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("talky.json");
    std::fs::write(
        &path,
        r#"{"name":"talky","witnesses":["x"],"collector":"board",
            "requester":[{"op":"send_to_z","payload":"hi"}],
            "environment":[{"op":"activate_y","n":1}]}"#,
    )
    .unwrap();
    let strong = dcaudit(&["audit", "strong", "--scenario", path.to_str().unwrap(), "--trials", "10"]);
    assert_eq!(strong.status.code(), Some(2), "{}", String::from_utf8_lossy(&strong.stderr));
}

#[test]
fn report_goes_to_stdout_without_out_flag() {
    let out = dcaudit(&["audit", "weak", "--scenario", "board_basic", "--trials", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["audit"], "weak");
    assert_eq!(report["trials"], 20);
    assert_eq!(report["verdict"], "pass");
}

#[test]
fn overrides_reach_the_report() {
    let out = dcaudit(&["audit", "weak", "--scenario", "board_basic", "--trials", "7", "--seed", "42", "--lambda", "24"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["trials"], 7);
    assert_eq!(report["master_seed"], 42);
    assert_eq!(report["lambda"], 24);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["audit", "strong", "--scenario", "board_flagged", "--trials", "100"];
    let a = dcaudit(&args);
    let b = dcaudit(&args);
    assert_eq!(a.status.code(), Some(1));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn check_hi_exit_codes() {
    assert_eq!(dcaudit(&["check-hi", "--impl", "sorted_set", "--max-len", "4"]).status.code(), Some(0));
    let tomb = dcaudit(&["check-hi", "--impl", "tombstone_list", "--max-len", "4"]);
    assert_eq!(tomb.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&tomb.stdout).unwrap();
    assert_eq!(report["implementation"], "tombstone_list");
    assert_eq!(dcaudit(&["check-hi", "--impl", "no_such_thing"]).status.code(), Some(2));
}

#[test]
fn scenarios_lists_builtins() {
    let out = dcaudit(&["scenarios"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "board_basic"));
    assert_eq!(text.lines().count(), dcaudit_cli::BUILTIN_SCENARIOS.len());
}

#[test]
fn bad_usage_exits_two() {
    assert_eq!(dcaudit(&["audit", "sideways", "--scenario", "board_basic"]).status.code(), Some(2));
    assert_eq!(dcaudit(&["experiment", "thm3"]).status.code(), Some(2));
    assert_eq!(dcaudit(&["--help"]).status.code(), Some(0));
}
