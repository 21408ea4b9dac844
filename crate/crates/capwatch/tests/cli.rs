use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn capwatch() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_capwatch"));
    c.env_remove("CAPWATCH_SEED");
    c
}

fn dump(dir: &Path, names: &[&str]) -> PathBuf {
    let out = capwatch().arg("dump-builtin").args(names).output().unwrap();
    assert!(out.status.success());
    let path = dir.join("config.json");
    fs::write(&path, &out.stdout).unwrap();
    path
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    capwatch()
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn metrics(out: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{name}.metrics.json"))).unwrap()).unwrap()
}

#[test]
fn validate_accepts_builtin_dump() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &[]);
    let out = capwatch().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validate_reports_negative_rate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema_version": 1, "scenarios": [
            {"name": "bad", "rates": {"endpoints": [5.0, 10.0], "rates": [1.0, -0.5]}}
        ]}"#,
    );
    let out = capwatch().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["valid"], false);
    let messages: Vec<&str> = report["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["message"].as_str().unwrap())
        .collect();
    assert!(messages.iter().any(|m| m.contains("negative rate")), "{messages:?}");
}

#[test]
fn validate_rejects_malformed_json_and_bad_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "{not json");
    let out = capwatch().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let config = write_config(dir.path(), r#"{"schema_version": 9, "builtins": ["mid-gap"]}"#);
    let out = capwatch().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version"));
}

#[test]
fn missing_file_is_an_io_error() {
    for sub in ["validate", "run", "verify"] {
        let out = capwatch()
            .args([sub, "--config", "/nonexistent/capwatch.json"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "{sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let out = capwatch().args(["run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = capwatch()
        .args(["run", "--config", "x.json", "--seed", "-3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_reports_reference_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["single-block-s1", "two-block-s2"]);
    let out_dir = dir.path().join("out");
    let out = run(&config, &out_dir, &["--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let s1 = metrics(&out_dir, "single-block-s1");
    let c = s1["miss_probability"].as_f64().unwrap();
    assert!((c - 4.54e-5).abs() < 1e-7, "{c}");
    assert!((s1["conditional_lag"].as_f64().unwrap() - 0.5).abs() < 1e-3);

    let s2 = metrics(&out_dir, "two-block-s2");
    assert!((s2["miss_probability"].as_f64().unwrap() - 0.4066).abs() < 1e-4);
    assert!((s2["conditional_lag"].as_f64().unwrap() - 1.27).abs() < 1e-3);

    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("single-block-s1: C="));
    assert!(lines[1].starts_with("two-block-s2: C="));
    assert!(lines[1].contains("conditional_lag=") && lines[1].contains("final_bias_magnitude="));
}

#[test]
fn outputs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["mid-gap"]);
    let out_dir = dir.path().join("out");
    assert!(run(&config, &out_dir, &["--seed", "11", "--emit", "csv,json,svg"])
        .status
        .success());

    let csv = fs::read_to_string(out_dir.join("mid-gap.series.csv")).unwrap();
    let header: Vec<&str> = csv.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header.iter().any(|l| l.starts_with("# config_hash: ")));
    assert!(header.contains(&"# seed: 11"));
    assert!(header.iter().any(|l| l.starts_with("# tool_version: capwatch ")));
    let mut body = csv.lines().skip(header.len());
    assert_eq!(body.next(), Some("y_t,bias_magnitude,detection_likelihood"));
    let rows: Vec<&str> = body.collect();
    assert_eq!(rows.len(), 201);
    for cell in rows.iter().flat_map(|r| r.split(',')) {
        let digits = cell
            .trim_start_matches(['-', '0', '.'])
            .chars()
            .filter(char::is_ascii_digit)
            .count();
        assert!(digits <= 12, "{cell}");
    }

    let m = metrics(&out_dir, "mid-gap");
    assert_eq!(m["provenance"]["seed"], 11);
    assert_eq!(m["provenance"]["config_hash"].as_str().unwrap().len(), 64);

    let svg = fs::read_to_string(out_dir.join("mid-gap.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("seed: 11") && svg.contains("config_hash: "));
    assert!(svg.contains("<path d=\"M"));
}

#[test]
fn emit_selects_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["mid-gap"]);
    let out_dir = dir.path().join("out");
    assert!(run(&config, &out_dir, &["--emit", "json"]).status.success());
    let names: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["mid-gap.metrics.json".to_string()]);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["two-block-s1", "policy-balanced"]);
    let read = |out: &Path| {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run(&config, &a, &["--seed", "7", "--emit", "csv,json,svg"])
        .status
        .success());
    assert!(run(&config, &b, &["--seed", "7", "--emit", "csv,json,svg"])
        .status
        .success());
    assert!(run(&config, &c, &["--seed", "8", "--emit", "csv,json,svg"])
        .status
        .success());
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["mid-gap"]);
    let out_dir = dir.path().join("out");
    let out = capwatch()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .env("CAPWATCH_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(metrics(&out_dir, "mid-gap")["provenance"]["seed"], 99);

    let out = run(&config, &out_dir, &["--seed", "5"]);
    assert!(out.status.success());
    assert_eq!(metrics(&out_dir, "mid-gap")["provenance"]["seed"], 5);
}

#[test]
fn overrides_change_grid_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["single-block-s1"]);
    let out_dir = dir.path().join("out");
    assert!(run(&config, &out_dir, &["--grid", "0.5", "--paths", "100"])
        .status
        .success());
    let m = metrics(&out_dir, "single-block-s1");
    assert_eq!(m["series_rows"], 21);
    assert_eq!(m["ensemble"]["paths"], 100);
}

#[test]
fn verify_agrees_for_single_block() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["single-block-s1"]);
    let out = capwatch().args(["verify", "--config"]).arg(&config).output().unwrap();
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{table}");
    assert_eq!(table.lines().count(), 1 + 8);
    assert!(!table.contains("FAIL"));
}

#[test]
fn verify_catches_a_wrong_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["single-block-s1"]);
    let out = capwatch()
        .args(["verify", "--config"])
        .arg(&config)
        .args(["--perturb-analytic", "0.05"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let table = String::from_utf8(out.stdout).unwrap();
    let failing: Vec<&str> = table.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1);
    assert!(failing[0].contains("mean"));
}

#[test]
fn verify_zero_rate_rows_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"schema_version": 1, "scenarios": [
            {"name": "blind", "rates": {"endpoints": [10.0], "rates": [0.0]}}
        ]}"#,
    );
    let out = capwatch()
        .args(["verify", "--config"])
        .arg(&config)
        .args(["--draws", "2000"])
        .output()
        .unwrap();
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{table}");
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        let z = cols[cols.len() - 2];
        assert!(z == "0.000" || z == "-", "{line}");
    }
}

#[test]
fn verify_skips_dynamic_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let config = dump(dir.path(), &["market-dynamics"]);
    let out = capwatch().args(["verify", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));
}
