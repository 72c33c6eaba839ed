use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn standard_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard.json")
}

fn roughchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughchain"))
        .args(args)
        .env_remove("ROUGHCHAIN_CONFIG")
        .output()
        .expect("binary runs")
}

fn small_price(extra: &[&str]) -> Output {
    let config = standard_config();
    let mut args = vec![
        "price",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "numerics.x_nodes=24",
        "--set",
        "numerics.v_nodes=24",
    ];
    args.extend_from_slice(extra);
    roughchain(&args)
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn price_small_grid() {
    let out = small_price(&[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = stdout_json(&out);
    let price = json["price"].as_f64().unwrap();
    assert!((price - 6.05).abs() < 0.1, "{price}");
    assert_eq!(json["diagnostics"]["x_nodes"], 24);
}

#[test]
fn prices_print_seventeen_digits() {
    let out = small_price(&[]);
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with("\"price\""))
        .unwrap();
    let number = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = number.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{number}");
}

#[test]
fn overrides_are_recorded() {
    let out = small_price(&["--set", "option.strike=5"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    let overrides = json["provenance"]["overrides"].as_array().unwrap();
    assert_eq!(overrides.len(), 3);
    assert_eq!(overrides[2]["path"], "option.strike");
    assert_eq!(json["option"]["strike"].as_f64(), Some(5.0));
}

#[test]
fn unknown_key_is_config_error() {
    let out = small_price(&["--set", "numerics.nodes=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn bad_parameter_is_config_error() {
    assert_eq!(
        small_price(&["--set", "kernel.hurst=0.7"]).status.code(),
        Some(2)
    );
    assert_eq!(
        small_price(&["--set", "option.rate=0.05"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_config_is_config_error() {
    let out = roughchain(&["price", "--config", "/nonexistent/roughchain.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rejected_negative_rates_are_numerical_failures() {
    let out = small_price(&["--set", "numerics.negative_rates=reject"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_path_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_roughchain"))
        .args([
            "price",
            "--set",
            "numerics.x_nodes=16",
            "--set",
            "numerics.v_nodes=16",
        ])
        .env("ROUGHCHAIN_CONFIG", standard_config())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn out_file_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("price.json");
    let out = small_price(&["--threads", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let json: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(json["price"].as_f64().is_some());
}

#[test]
fn table_writes_csv() {
    let config = standard_config();
    let out = roughchain(&[
        "table",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "table.eps=[1e-4,1e-6]",
        "--set",
        "table.nodes=[16,24]",
        "--set",
        r#"table.models=["rough-heston","rough-sabr"]"#,
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| &r[9] == "ok"));
    assert_eq!(&rows[0][6], "6.0545000000000000e0");
}

#[test]
fn compare_mc_reports_z_score() {
    let config = standard_config();
    let out = roughchain(&[
        "compare-mc",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "numerics.x_nodes=24",
        "--set",
        "numerics.v_nodes=24",
        "--set",
        "mc.paths=2000",
        "--set",
        "mc.steps=64",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = stdout_json(&out);
    assert_eq!(json["mc"]["paths"], 2000);
    assert!(json["z_score"].as_f64().unwrap().is_finite());
}

#[test]
fn selfcheck_passes_without_config() {
    let out = roughchain(&["selfcheck"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    assert_eq!(json["passed"], true);
    assert_eq!(json["failures"], 0);
}
