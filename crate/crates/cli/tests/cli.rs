use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collapse-lab"))
        .args(args)
        .env("COLLAPSE_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn minimal_config_is_filled_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"name": "product-ode", "a0": 3, "b0": 0.5}"#);
    let out = lab(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["horizon"], 10.0);
    assert_eq!(v["dt_policy"], "adaptive");
    assert_eq!(v["acceptance"]["closed_form_tol"], 1e-8);
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"name": "product-ode", "a0": 1, "b0": 1, "foo": 1}"#);
    let out = lab(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));
}

#[test]
fn negative_fiber_area_cites_positivity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"name": "product-ode", "a0": 1, "b0": -1}"#);
    let out = lab(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("b0") && err.contains("positive"), "{err}");
}

#[test]
fn malformed_json_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\"name\": ");
    assert_eq!(lab(&["validate", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = lab(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn list_has_six_rows() {
    let out = lab(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7, "{text}");
    let out = lab(&["list", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().any(|r| r["name"] == "gke-parabolic"));
}

#[test]
fn trivial_product_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"name": "product-ode", "a0": 1, "b0": 1}"#);
    let out_dir = dir.path().join("out");
    let out = lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let acc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("acceptance.json")).unwrap()).unwrap();
    assert_eq!(acc["passed"], true);
    for check in acc["checks"].as_array().unwrap() {
        assert!(check.get("measured").is_some() && check.get("bound").is_some());
        assert!(check["passed"].is_boolean());
    }
    let slope = acc["summary"]["diameter_slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() < 1e-6);
    let plot = fs::read_to_string(out_dir.join("plots/diameter.dat")).unwrap();
    assert!(plot.lines().all(|l| l.split_whitespace().count() == 2));
    let csv = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("diagnostics.schema.json")).unwrap()).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let documented: Vec<&str> = schema["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(header, documented);
}

#[test]
fn failing_acceptance_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"name": "product-ode", "a0": 3, "b0": 0.5, "acceptance": {"closed_form_tol": 1e-30}}"#,
    );
    let out = lab(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL closed_form_error"));
}

#[test]
fn solver_failure_exits_with_three_and_leaves_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    // A single Newton iteration cannot reach the tolerance.
    let cfg = write_config(
        dir.path(),
        r#"{"name": "gke-parabolic", "forcing": "static", "newton": {"max_iter": 1}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("error.txt")).unwrap();
    assert!(text.starts_with("gke-parabolic"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"name": "semiflat-identities", "seed": 11, "wp_resolution": 16}"#);
    let runs: Vec<_> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("run{i}"));
            assert_eq!(lab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
            out
        })
        .collect();
    for file in ["diagnostics.csv", "rates.json", "acceptance.json", "config.json"] {
        assert_eq!(
            fs::read(runs[0].join(file)).unwrap(),
            fs::read(runs[1].join(file)).unwrap(),
            "{file}"
        );
    }
    let other = dir.path().join("other");
    let cfg2 = write_config(dir.path(), r#"{"name": "semiflat-identities", "seed": 12, "wp_resolution": 16}"#);
    lab(&["run", "--config", &cfg2, "--out", other.to_str().unwrap()]);
    assert_ne!(
        fs::read(runs[0].join("diagnostics.csv")).unwrap(),
        fs::read(other.join("diagnostics.csv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"name": "curvature-bound", "horizon": 2}"#);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_collapse-lab"))
            .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("COLLAPSE_LAB_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        outputs.push(fs::read(out.join("diagnostics.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn invalid_thread_budget_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"name": "product-ode", "a0": 1, "b0": 1}"#);
    let status = Command::new(env!("CARGO_BIN_EXE_collapse-lab"))
        .args(["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()])
        .env("COLLAPSE_LAB_THREADS", "zero")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
