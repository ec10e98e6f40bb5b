use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use assert_cmd::Command;
use tempfile::TempDir;

const QUICK: &str = r#""quadrature": {"sigma_level": 16, "fiber_level": 2, "radial_points": 32}"#;

fn tubecalc() -> Command {
    Command::cargo_bin("tubecalc").unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_value(text: &str) -> f64 {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        tubecalc::cli::CSV_HEADER.to_vec()
    );
    let rec = r.records().next().unwrap().unwrap();
    rec[5].parse().unwrap()
}

#[test]
fn sphere_delta_derivative_scenario() {
    let dir = TempDir::new().unwrap();
    let sc = write(
        dir.path(),
        "s.json",
        &format!(
            r#"{{"shape": {{"kind": "sphere", "radius": 1.0}},
                "distribution": {{"kind": "delta", "degree": 0}},
                "testfn": {{"kind": "normal_component", "axis": 1}},
                "axis": 1, {QUICK}}}"#
        ),
    );
    let out = dir.path().join("r.csv");
    tubecalc().arg("run").arg(&sc).arg("--out").arg(&out).assert().code(0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!((csv_value(&text) + 8.0 * PI / 3.0).abs() < 1e-8, "{text}");
}

#[test]
fn circle_delta_scenario_to_stdout() {
    let dir = TempDir::new().unwrap();
    let sc = write(
        dir.path(),
        "c.json",
        r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "delta", "degree": 0},
            "testfn": {"kind": "bump"}}"#,
    );
    let out = tubecalc().arg("run").arg(&sc).assert().code(0).get_output().stdout.clone();
    let v = csv_value(&String::from_utf8(out).unwrap());
    assert!((v - 2.0 * PI).abs() < 1e-10, "{v}");
}

#[test]
fn malformed_json_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "bad.json", r#"{"shape": {"kind": "sphere""#);
    let out = dir.path().join("r.csv");
    tubecalc().arg("run").arg(&sc).arg("--out").arg(&out).assert().code(2);
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn schema_errors_name_the_key() {
    let dir = TempDir::new().unwrap();
    let sc = write(
        dir.path(),
        "k.json",
        r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "delta", "degree": 0},
            "testfn": {"kind": "bump"}, "quadrature": {"sigma": 3}}"#,
    );
    let out = dir.path().join("r.csv");
    let assert = tubecalc().arg("run").arg(&sc).arg("--out").arg(&out).assert().code(2);
    let err = String::from_utf8(assert.get_output().stderr.clone()).unwrap();
    assert!(err.contains("quadrature") && err.contains("sigma"), "{err}");
    assert!(!out.exists());

    let sc = write(
        dir.path(),
        "s.json",
        r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "delta", "degree": 0},
            "testfn": {"kind": "bump", "support": 3.0}}"#,
    );
    let assert = tubecalc().arg("run").arg(&sc).assert().code(2);
    let err = String::from_utf8(assert.get_output().stderr.clone()).unwrap();
    assert!(err.contains("testfn.support"), "{err}");
}

#[test]
fn failing_expected_value_exits_3_and_still_reports() {
    let dir = TempDir::new().unwrap();
    let sc = write(
        dir.path(),
        "u.json",
        r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "delta", "degree": 0},
            "testfn": {"kind": "bump"}, "expected": 6.0}"#,
    );
    let out = dir.path().join("r.csv");
    tubecalc().arg("run").arg(&sc).arg("--out").arg(&out).assert().code(3);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",false"), "{text}");
}

#[test]
fn reports_are_deterministic_and_json_mirrors_csv() {
    let dir = TempDir::new().unwrap();
    let sc = write(
        dir.path(),
        "d.json",
        &format!(
            r#"{{"shape": {{"kind": "circle3d"}}, "distribution": {{"kind": "pf", "lambda": -2.5}},
                "testfn": {{"kind": "laurent", "order": -1, "coeffs": [1.0, 0.5]}}, {QUICK}}}"#
        ),
    );
    let run = |name: &str, format: &str| {
        let out = dir.path().join(name);
        tubecalc()
            .arg("run")
            .arg(&sc)
            .arg("--out")
            .arg(&out)
            .args(["--format", format])
            .assert()
            .code(0);
        fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", "csv");
    let b = run("b.csv", "csv");
    assert_eq!(a, b);
    let j1 = run("a.json", "json");
    assert_eq!(j1, run("b.json", "json"));
    let json: serde_json::Value = serde_json::from_str(&j1).unwrap();
    let row = &json["rows"][0];
    assert_eq!(row["value"].as_f64().unwrap().to_bits(), csv_value(&a).to_bits());
    assert_eq!(json["scenario"]["distribution"]["lambda"], -2.5);
    assert_eq!(json["total"], 1);
    let mut r = csv::Reader::from_reader(a.as_bytes());
    let rec = r.records().next().unwrap().unwrap();
    for (k, name) in tubecalc::cli::CSV_HEADER.iter().enumerate() {
        let field = &row[*name];
        match field {
            serde_json::Value::String(s) => assert_eq!(s, &rec[k]),
            serde_json::Value::Number(n) => assert_eq!(n.as_f64().unwrap(), rec[k].parse::<f64>().unwrap()),
            serde_json::Value::Bool(b) => assert_eq!(b.to_string(), &rec[k]),
            serde_json::Value::Null => assert_eq!("", &rec[k]),
            other => panic!("{name}: {other}"),
        }
    }
}

#[test]
fn residue_and_projection_operations() {
    let dir = TempDir::new().unwrap();
    let res = write(
        dir.path(),
        "r.json",
        &format!(
            r#"{{"shape": {{"kind": "circle3d"}}, "distribution": {{"kind": "pf", "lambda": -2}},
                "testfn": {{"kind": "bump"}}, "operation": "residue", {QUICK}}}"#
        ),
    );
    let out = tubecalc().arg("run").arg(&res).assert().code(0).get_output().stdout.clone();
    let v = csv_value(&String::from_utf8(out).unwrap());
    assert!((v - 4.0 * PI * PI).abs() < 1e-3 * 4.0 * PI * PI, "{v}");

    let proj = write(
        dir.path(),
        "p.json",
        &format!(
            r#"{{"shape": {{"kind": "circle3d"}},
                "distribution": {{"kind": "delta", "degree": 0, "g": {{"kind": "omega", "terms": [{{"coeff": 1.0, "powers": [1]}}]}}}},
                "testfn": {{"kind": "polynomial", "terms": [{{"coeff": 1.0, "powers": [1, 2, 0]}}, {{"coeff": 2.0, "powers": []}}]}},
                "operation": "project", "expected": 0.0, {QUICK}}}"#
        ),
    );
    tubecalc().arg("run").arg(&proj).assert().code(0);
}

#[test]
fn validate_quick_subset_writes_sorted_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v.csv");
    let assert = tubecalc()
        .args(["validate", "--level", "quick", "--criterion", "2", "--criterion", "9", "--out"])
        .arg(&out)
        .assert()
        .code(0);
    let stdout = String::from_utf8(assert.get_output().stdout.clone()).unwrap();
    assert!(stdout.starts_with("check_id"), "{stdout}");
    assert!(stdout.contains("criterion 2 (mean-curvature identity): 4/4"), "{stdout}");
    let text = fs::read_to_string(&out).unwrap();
    let ids: Vec<String> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(ids.len() > 100);
}

#[test]
fn validate_reports_failing_rows_with_exit_3() {
    let assert = tubecalc().args(["validate", "--criterion", "7"]).assert().code(3);
    let stdout = String::from_utf8(assert.get_output().stdout.clone()).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("criterion 7 ")), "{stdout}");
    assert!(stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn thread_cap_is_validated() {
    let dir = TempDir::new().unwrap();
    let sc = write(
        dir.path(),
        "t.json",
        r#"{"shape": {"kind": "circle3d"}, "distribution": {"kind": "delta", "degree": 0},
            "testfn": {"kind": "bump"}, "quadrature": {"sigma_level": 4}}"#,
    );
    tubecalc().env("TUBECALC_THREADS", "1").arg("run").arg(&sc).assert().code(0);
    tubecalc().env("TUBECALC_THREADS", "zero").arg("run").arg(&sc).assert().code(2);
}
