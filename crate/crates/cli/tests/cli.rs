use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nlwire(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlwire"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn nlwire")
}

fn json_ok(dir: &Path, args: &[&str]) -> Value {
    let out = nlwire(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn census_prints_3152() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlwire(dir.path(), &["census"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "3152");
}

#[test]
fn optimize2_star_point() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(
        dir.path(),
        &["optimize2", "--cs", "I", "--eta", "0.888", "--omega", "0.1"],
    );
    assert!((v["value"].as_f64().unwrap() - 2.3525).abs() < 2e-4);
    assert_eq!(v["alice"], serde_json::json!([11, 17]));
    assert_eq!(v["bob"], serde_json::json!([11, 17]));
}

#[test]
fn optimize2_table_has_every_bob_pair() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    let v = json_ok(
        dir.path(),
        &[
            "--threads",
            "2",
            "optimize2",
            "--cs",
            "I",
            "--eta",
            "0.888",
            "--omega",
            "0.1",
            "--table",
            table.to_str().unwrap(),
        ],
    );
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bob_l0,bob_l1,value"));
    let values: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 82 * 82);
    let best = values.iter().cloned().fold(f64::MIN, f64::max);
    assert!((best - v["value"].as_f64().unwrap()).abs() < 1e-9);
    assert!(Path::new(&format!("{}.manifest.json", table.display())).exists());
}

#[test]
fn box_reports_chsh_and_validity() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(dir.path(), &["box", "--extremal", "NL1"]);
    assert_eq!(v["chsh"].as_f64().unwrap(), 4.0);
    assert_eq!(v["valid"], Value::Bool(true));
    assert_eq!(v["box"]["order"], "xy-ab");
}

#[test]
fn box_file_round_trip_feeds_apply() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let out = nlwire(
        dir.path(),
        &[
            "box", "--cs", "I", "--eta", "0.888", "--omega", "0.1", "--out", "b.json",
        ],
    );
    assert!(out.status.success());
    assert!(path.exists());
    let v = json_ok(
        dir.path(),
        &["apply", "--protocol", "FWW", "--box", "b.json"],
    );
    assert!((v["chsh_before"].as_f64().unwrap() - 2.2).abs() < 1e-12);
    assert!((v["chsh_after"].as_f64().unwrap() - 2.352584).abs() < 1e-9);
}

#[test]
fn boundary_chord_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(
        dir.path(),
        &[
            "boundary",
            "--curve",
            "CHORD_I",
            "--eta",
            "0.6666666666666666",
        ],
    );
    assert!((v["omega"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-4);
    let r = json_ok(
        dir.path(),
        &["boundary", "--curve", "FWW_I", "--samples", "20"],
    );
    assert!(r["max_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn serial_transcript_json() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(
        dir.path(),
        &[
            "serial",
            "--cs",
            "I",
            "--eta",
            "0.888",
            "--omega",
            "0.1",
            "--max-rounds",
            "2",
        ],
    );
    let rounds = v["rounds"].as_array().unwrap();
    assert_eq!(rounds.len(), 2);
    assert!((rounds[0]["chsh"].as_f64().unwrap() - 2.352584).abs() < 1e-9);
    assert_eq!(v["stop_reason"], "round_cap");
}

#[test]
fn scan_writes_manifest_and_replays_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlwire(
        dir.path(),
        &[
            "scan",
            "--cs",
            "I",
            "--resolution",
            "6",
            "--protocols",
            "FWW,EQ2",
            "--chsh2",
            "--out",
            "s.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("cs,eta,omega,chsh_init,FWW_after,FWW_distillable,EQ2_after,EQ2_distillable,chsh2,in_simplex"));
    assert_eq!(csv.lines().count(), 1 + 36);
    let manifest: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("s.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["outputs"][0], "s.csv");
    assert!(manifest["tolerances"].is_object());

    let v = json_ok(dir.path(), &["replay", "s.csv.manifest.json"]);
    assert_eq!(v["identical"], Value::Bool(true));
}

#[test]
fn scan_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.cfg"),
        "cs = II\nresolution = 4\nprotocols = ABL2\nout = a.csv\n",
    )
    .unwrap();
    let out = nlwire(
        dir.path(),
        &["scan", "--config", "s.cfg", "--resolution", "3"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9);
    assert!(csv.lines().nth(1).unwrap().starts_with("II,"));
    let v = json_ok(dir.path(), &["replay", "a.csv.manifest.json"]);
    assert_eq!(v["identical"], Value::Bool(true));
}

#[test]
fn argument_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["box", "--cs", "I", "--eta", "0.9", "--omega", "0.3"][..],
        &["box", "--cs", "IV", "--eta", "0.1", "--omega", "0.1"],
        &["apply", "--protocol", "NOPE", "--extremal", "NL1"],
        &["boundary", "--curve", "CHORD_I", "--eta", "0.1"],
        &[
            "scan",
            "--cs",
            "I",
            "--resolution",
            "1",
            "--protocols",
            "FWW",
        ],
        &["no-such-command"],
        &["box"],
    ] {
        let out = nlwire(dir.path(), args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn computation_and_io_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlwire(dir.path(), &["box", "--box", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = nlwire(
        dir.path(),
        &["box", "--extremal", "NL1", "--out", "no/such/dir/b.json"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn protocols_list_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlwire(dir.path(), &["protocols", "list"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    let v = json_ok(dir.path(), &["protocols", "show", "EQ3"]);
    assert_eq!(v["copies"], 3);
    assert!(v["alice"].is_array() || v["alice"].is_object());
}
