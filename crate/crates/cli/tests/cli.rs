use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ci-euler"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn sheet_passes_verification() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"subsolution": {"kind": "vortex_sheet", "delta": 0.5}, "grid": [32, 32, 8]}"#);
    let out = run(&["verify-subsolution", "--config", "c.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("o"));
    assert_eq!(r["passed"], Value::Bool(true));
    assert!(r["details"]["min_zone_margin"].as_f64().unwrap() > 0.0);
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"sufficient condition in zone"));
}

#[test]
fn k_member_is_on_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    // v = (1, 2), e = |v|^2 / 2, sigma = (v (x) v) traceless, m = (e + p) v
    write(dir.path(), "h.json", r#"{"states": [{"state": [1, 2, 2.5, 5, -1.5, 2, 2.5]}, {"state": [0, 0, 0, 0, 0.5, 0, 0.2]}]}"#);
    let out = run(&["hull-check", "--config", "h.json", "--out", "."], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    let states = r["details"]["states"].as_array().unwrap();
    assert_eq!(states[0]["classification"], "boundary of hull");
    assert!(states[0]["margin"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(states[1]["classification"], "outside hull");
}

#[test]
fn segment_outside_hull_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.json", r#"{"state": [0, 0, 0, 0, 0.5, 0, 0.2]}"#);
    let out = run(&["segment", "--config", "s.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("interior of the hull"));
    // raising e above lambda_max puts the state inside
    let out = run(&["segment", "--config", "s.json", "--set", "state.6=1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["passed"], Value::Bool(true));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"subsolution": {"kind": "vortex_sheet", "delta": 0.5}}"#);
    for args in [
        vec!["verify-subsolution", "--config", "missing.json"],
        vec!["verify-subsolution", "--config", "c.json", "--set", "unknown=1"],
        vec!["verify-subsolution", "--config", "c.json", "--set", "eps=abc"],
        vec!["verify-subsolution", "--config", "c.json", "--set", "noequals"],
    ] {
        let out = run(&args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(run(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn overrides_win_over_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"subsolution": {"kind": "vortex_sheet", "delta": 0.5}, "grid": [16, 16, 4]}"#);
    run(&["verify-subsolution", "--config", "c.json", "--set", "eps=2", "--out", "o"], dir.path());
    assert_eq!(report(&dir.path().join("o"))["details"]["eps"], 2.0);
}

#[test]
fn wave_csv_has_header_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "w.json",
        r#"{"direction": [0, 1.4142135623730947, 0, 1.4142135623730945, 0, -1.732050807568877, 0], "frequency": 8, "samples": 8}"#,
    );
    let out = run(&["wave", "--config", "w.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/wave.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,t,v1,v2,m1,m2,sigma_a,sigma_b,e"));
    assert_eq!(lines.clone().count(), 512);
    for line in lines {
        for field in line.split(',') {
            let x: f64 = field.parse().unwrap();
            assert_eq!(x.to_string(), field);
        }
    }
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "i.json",
        r#"{"subsolution": {"kind": "vortex_sheet", "delta": 0.5}, "budget": 3, "weak_check": false}"#,
    );
    for out in ["a", "b"] {
        let o = run(&["iterate", "--config", "i.json", "--seed", "7", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["iteration.jsonl", "report.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn pressure_matches_on_the_sheet() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.json", r#"{"subsolution": {"kind": "vortex_sheet", "delta": 0.5}, "n": 64}"#);
    let out = run(&["pressure", "--config", "p.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("pressure.csv")).unwrap();
    assert_eq!(csv.lines().count(), 64 * 64 + 1);
}

#[test]
fn density_reports_stages() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.json", r#"{"shear": {"profile": "sine", "amplitude": 1.0, "k": 1}, "delta": 0.1, "stages": 2}"#);
    let out = run(&["density", "--config", "d.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let jsonl = fs::read_to_string(dir.path().join("density.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 3);
}
