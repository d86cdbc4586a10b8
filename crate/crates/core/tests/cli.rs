use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn swingguard(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swingguard"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn missing_network_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingguard(&["certify", "--network", "nope.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn malformed_network_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\"buses\": [").unwrap();
    let o = swingguard(&["certify", "--network", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingguard(&["certify", "--network", "builtin:two_bus", "--frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_scenario_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), r#"{"t_end": 1.0, "dt": -0.1}"#).unwrap();
    let o = swingguard(&["run", "--network", "builtin:two_bus", "--scenario", "s.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn envelope_inside_band_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingguard(&["envelope", "--network", "builtin:two_bus", "--bus", "1", "--omega0", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn certify_two_bus() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingguard(&["certify", "--network", "builtin:two_bus", "--out", "c"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("synchronization condition: PASS (margin 0.5)"), "{text}");
    assert!(text.contains("c: 0.342427"), "{text}");
    let cert: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("c/certificate.json")).unwrap()).unwrap();
    assert!((cert["sync_margin"].as_f64().unwrap() - 0.5).abs() < 1e-10);
}

#[test]
fn scenario_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = r#"{
        "name": "kick",
        "t_end": 2.0,
        "initial_state": {"state": {"lambda": [0.5235987755982988], "omega": [0.5, 0.0]}}
    }"#;
    fs::write(dir.path().join("kick.json"), scenario).unwrap();
    let o = swingguard(
        &["run", "--network", "builtin:two_bus", "--scenario", "kick.json", "--out", "o", "--csv-stride", "10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("o");
    let csv = fs::read_to_string(out.join("kick.csv")).unwrap();
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    // header plus every tenth of 2001 samples
    assert_eq!(rows, 1 + 201);
    assert!(out.join("kick.audit.json").exists());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("V monotone: PASS"), "{report}");
    assert!(report.contains("safe-band invariance: PASS"), "{report}");
}

#[test]
fn bound_on_two_bus() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingguard(&["bound", "--network", "builtin:two_bus", "--eta", "0.3", "--out", "b"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("sandwich order: PASS"), "{text}");
    assert!(dir.path().join("b/bound.json").exists());
}

#[test]
fn bound_level_above_region_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingguard(&["bound", "--network", "builtin:two_bus", "--eta", "5.0"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
