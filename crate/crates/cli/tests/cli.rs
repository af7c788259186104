use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sparselab(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sparselab"))
        .arg(&cfg)
        .args(["--out", dir.join("out").to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn schema_columns(experiment: &str) -> Vec<String> {
    let schema = read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/csv_columns.json"));
    serde_json::from_value(schema[experiment].clone()).unwrap()
}

#[test]
fn vdc_quadratic_slope_is_minus_one_half() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sparselab(
        tmp.path(),
        r#"{"experiment": "vdc", "params": {"polynomials": [[0, 0, 1]], "lambda_count": 15}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(tmp.path().join("out/vdc.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    assert_eq!(header, schema_columns("vdc"));

    // least-squares slope of log|I| against log λ, straight from the CSV
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].parse::<f64>().unwrap().ln(), f[3].parse::<f64>().unwrap().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + 0.5).abs() < 0.05, "slope {slope}");

    let summary = read_json(&tmp.path().join("out/vdc.summary.json"));
    assert_eq!(summary["passed"], Value::Bool(true));
    assert_eq!(summary["config_sha256"].as_str().unwrap().len(), 64);
    assert!(summary["versions"]["sparselab"].is_string());
    let fitted = summary["results"]["fits"][0]["exponent"].as_f64().unwrap();
    assert!((fitted - slope).abs() < 0.05);
}

#[test]
fn sparse_with_unit_inputs_stops_at_the_root() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sparselab(
        tmp.path(),
        r#"{"experiment": "sparse", "params": {"inputs": "constant", "phases": [[]], "max_ratio": 100},
            "output": {"prefix": "unit"}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let csv = fs::read_to_string(tmp.path().join("out/unit.csv")).unwrap();
    let header: Vec<String> = csv.lines().next().unwrap().split(',').map(String::from).collect();
    assert_eq!(header, schema_columns("sparse"));
    let size_col = header.iter().position(|c| c == "family_size").unwrap();
    for row in csv.lines().skip(1) {
        assert_eq!(row.split(',').nth(size_col), Some("1"));
    }

    let tree = read_json(&tmp.path().join("out/unit.family.json"));
    let nodes = tree["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 1);
    assert_eq!(nodes[0]["k"], 2);
    assert_eq!(nodes[0]["m"], 0);
}

#[test]
fn unknown_experiment_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sparselab(tmp.path(), r#"{"experiment": "fourier"}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn malformed_params_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_grid = sparselab(tmp.path(), r#"{"experiment": "czd", "params": {"s0": 5, "n": 1000}}"#, &[]);
    assert_eq!(bad_grid.status.code(), Some(2));
    let unknown_field = sparselab(tmp.path(), r#"{"experiment": "vdc", "params": {"lambdas": 3}}"#, &[]);
    assert_eq!(unknown_field.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn check_only_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sparselab(tmp.path(), r#"{"experiment": "rm"}"#, &["--check-only"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn failing_check_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    // a single unit pair gives ratio·(r−1) proportional to r−1, spread 10 across r
    let out = sparselab(tmp.path(), r#"{"experiment": "sparse", "params": {"inputs": "constant", "phases": [[]]}}"#, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL domination"));
}

#[test]
fn same_config_and_seed_give_identical_csv() {
    let cfg = r#"{"experiment": "sparse", "params": {"witness_pairs": 6, "domination_pairs": 3, "phases": [[[1, 1, 1.0]]]}, "seed": 7}"#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    sparselab(a.path(), cfg, &[]);
    sparselab(b.path(), cfg, &["--threads", "1"]);
    let ca = fs::read(a.path().join("out/sparse.csv")).unwrap();
    let cb = fs::read(b.path().join("out/sparse.csv")).unwrap();
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);

    let c = tempfile::tempdir().unwrap();
    sparselab(c.path(), cfg, &["--seed", "8"]);
    assert_ne!(ca, fs::read(c.path().join("out/sparse.csv")).unwrap());
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = Command::new(env!("CARGO_BIN_EXE_sparselab")).arg(&path).arg("--check-only").output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        seen += 1;
    }
    assert!(seen >= 9);
}
