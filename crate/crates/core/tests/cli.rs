//! End-to-end tests of the `entangle2d` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entangle2d"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| {
        panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn coeff_equal_masses_is_zero() {
    let out = run(&["coeff", "--mu1", "0.5"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mu1"], 0.5);
    assert!(v["E"].as_f64().unwrap().abs() <= 1e-6);
    assert!(v["err"].as_f64().is_some());
}

#[test]
fn table_reproduces_reference_row_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "table".to_string(),
            "--mu-min".into(),
            "0.5".into(),
            "--mu-max".into(),
            "1.0".into(),
            "--step".into(),
            "0.025".into(),
            "--tol".into(),
            "1e-8".into(),
            "--out".into(),
            p.display().to_string(),
        ]
    };
    for p in [&a, &b] {
        let argv = args(p);
        let out = run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = read(&a);
    assert_eq!(text, read(&b));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mu1,E,err"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    let row = rows.iter().find(|r| (r[0] - 0.8).abs() < 1e-9).unwrap();
    assert!((row[1] - 0.8203).abs() <= 2e-3);
}

#[test]
fn table_json_to_stdout() {
    let out = run(&["table", "--mu-min", "0.9", "--mu-max", "1.0", "--step", "0.05", "--format", "json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!((rows[2]["E"].as_f64().unwrap() - 2.6436).abs() < 2e-3);
}

#[test]
fn figure_svg_matches_companion_csv() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("fig.svg");
    let out = run(&["figure", "--step", "0.05", "--out", svg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg_text = read(&svg);
    let csv_text = read(&svg.with_extension("csv"));
    assert!(svg_text.starts_with("<svg"));
    let start = svg_text.find("points=\"").unwrap() + 8;
    let end = start + svg_text[start..].find('"').unwrap();
    let vertices: Vec<&str> = svg_text[start..end].split(' ').collect();
    let rows: Vec<String> = csv_text
        .lines()
        .skip(1)
        .map(|l| l.splitn(3, ',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(vertices.len(), 11);
    assert_eq!(vertices, rows);
}

#[test]
fn purity_sweep_report_schema() {
    let out = run(&["purity-sweep", "--mu1", "0.75", "--sigmas", "1e-5,1e-7", "--grid", "16", "--inv-a", "-1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mu1"], 0.75);
    assert_eq!(v["inv_a"], -1.0);
    assert!((v["reference_E"].as_f64().unwrap() - 0.4725).abs() < 2e-3);
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for e in entries {
        assert!(e["sigma"].is_f64() && e["purity"].is_f64() && e["E_hat"].is_f64());
    }
}

#[test]
fn purity_sweep_rejects_increasing_sigmas() {
    let out = run(&["purity-sweep", "--mu1", "0.75", "--sigmas", "1e-7,1e-5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error_kind"], "usage");
}

#[test]
fn p0_check_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p0.json");
    let out = run(&["p0-check", "--mu1", "0.75", "--sigma", "1e-8", "--ratios", "0,0.1", "--grid", "16", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&read(&path)).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries[0]["deviation"], 0.0);
    assert!(entries[1]["normalized"].as_f64().unwrap() > 0.0);
}

#[test]
fn scatlen_report_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("well.toml");
    std::fs::write(&spec, "kind = \"gaussian_well\"\nstrength = -1.0\nwidth = 1.0\nsupport_radius = 4.0\n").unwrap();
    let out = run(&["scatlen", "--potential", spec.to_str().unwrap(), "--mesh", "12,16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let levels = v["mesh_levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    assert_eq!(v["inv_a"], levels[1]["inv_a"]);
    assert!(v["condition_number"].as_f64().unwrap() >= 1.0);
    let oracle = v["oracle_inv_a"].as_f64().unwrap();
    assert!((oracle - v["inv_a"].as_f64().unwrap()).abs() < 0.05);

    let missing = run(&["scatlen", "--potential", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(stderr_json(&missing)["error_kind"], "io");

    std::fs::write(&spec, "kind = \"square_well\"\nsupport_radius = 1\n").unwrap();
    let bad = run(&["scatlen", "--potential", spec.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(stderr_json(&bad)["error_kind"], "parse");

    std::fs::write(&spec, "kind = \"disk_well\"\nstrength = 0.0\nsupport_radius = 1\n").unwrap();
    let zero = run(&["scatlen", "--potential", spec.to_str().unwrap(), "--mesh", "8"]);
    assert_eq!(zero.status.code(), Some(1));
    assert_eq!(stderr_json(&zero)["error_kind"], "invalid_input");
}

#[test]
fn invalid_flags_are_usage_errors() {
    for args in [
        vec!["table", "--step", "-0.1"],
        vec!["coeff"],
        vec!["coeff", "--mu1", "abc"],
        vec!["explode"],
        vec!["table", "--tol", "0"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let v = stderr_json(&out);
        assert_eq!(v["error_kind"], "usage");
        assert!(v["message"].as_str().is_some());
        assert!(v.get("context").is_some());
    }
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("purity-sweep"));
}
