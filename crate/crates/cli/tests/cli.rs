use std::path::Path;
use std::process::{Command, Output};

use mpe_core::harness::load_csv;
use mpe_core::{estimators::plugin_quantile_mpe, FirstStageConfig, PolicySpec};
use serde_json::Value;

fn mpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpe")).args(args).output().expect("binary runs")
}

fn small_mc_config(dir: &Path) -> String {
    let path = dir.join("mc.toml");
    std::fs::write(
        &path,
        "[experiment]\nn = 300\nreplications = 10\nseed = 3\n\n[dgp]\nname = \"linear_exogenous\"\n\n[oracle]\nn_oracle = 20000\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_clock_seconds");
    v
}

#[test]
fn exported_sample_estimates_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sample.csv");
    let csv_s = csv.to_str().unwrap();
    let out = mpe(&["simulate", "--dgp", "quadratic_exogenous", "--n", "400", "--seed", "8", "--out", csv_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = mpe(&["estimate", "--data", csv_s, "--tau", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let from_cli = v["estimate"]["value"].as_f64().unwrap();
    let data = load_csv(&csv).unwrap().data;
    let lib = plugin_quantile_mpe(&data, &PolicySpec::LocationShift, 0.5, &FirstStageConfig::default()).unwrap();
    assert_eq!(from_cli.to_bits(), lib.value.to_bits());
    assert_eq!(v["dropped_rows"], 0);
}

#[test]
fn latents_are_exported_only_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let csv_s = csv.to_str().unwrap();
    assert!(mpe(&["simulate", "--dgp", "triangular_normal", "--n", "60", "--out", csv_s]).status.success());
    let header = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "y,d,z");
    assert!(mpe(&["simulate", "--dgp", "triangular_normal", "--n", "60", "--out", csv_s, "--with-latents"]).status.success());
    let header = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "y,d,z,e,eta");
}

#[test]
fn configuration_and_ingestion_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y\n1\n2\n").unwrap();
    let out = mpe(&["estimate", "--data", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`d`"));

    let cfg = small_mc_config(dir.path());
    assert_eq!(mpe(&["mc", "--config", &cfg, "--reps", "5"]).status.code(), Some(2));
    assert_eq!(mpe(&["oracle"]).status.code(), Some(2));
    assert_eq!(mpe(&["oracle", "--dgp", "no_such_design"]).status.code(), Some(2));
    assert_eq!(mpe(&["mc", "--config", &cfg, "--estimator", "lasso"]).status.code(), Some(2));
    assert_eq!(mpe(&["mc", "--bogus-flag"]).status.code(), Some(2));
}

#[test]
fn estimation_failures_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sample.csv");
    let csv_s = csv.to_str().unwrap();
    assert!(mpe(&["simulate", "--dgp", "linear_exogenous", "--n", "200", "--out", csv_s]).status.success());
    let cfg = dir.path().join("floor.toml");
    std::fs::write(&cfg, "[first_stage]\ntrim_floor = 1000.0\n").unwrap();
    let out = mpe(&["estimate", "--config", cfg.to_str().unwrap(), "--data", csv_s]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mc_output_is_deterministic_and_csv_has_one_row_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_mc_config(dir.path());
    let a = mpe(&["mc", "--config", &cfg]);
    let b = mpe(&["mc", "--config", &cfg]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let (va, vb): (Value, Value) = (serde_json::from_slice(&a.stdout).unwrap(), serde_json::from_slice(&b.stdout).unwrap());
    assert_eq!(strip_timing(va.clone()), strip_timing(vb));
    assert_eq!(va["replications"].as_array().unwrap().len(), 10);
    let mean = va["summary"]["mean"].as_f64().unwrap();
    assert!((mean - 1.0).abs() < 0.2, "{mean}");

    let out = dir.path().join("mc.csv");
    let out_s = out.to_str().unwrap();
    assert!(mpe(&["mc", "--config", &cfg, "--format", "csv", "--out", out_s]).status.success());
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let kinds: Vec<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(kinds.len(), 11);
    assert_eq!(kinds.iter().filter(|k| *k == "replication").count(), 10);
    assert_eq!(kinds.last().unwrap(), "summary");
    let hash = va["config_hash"].as_str().unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.matches(hash).count(), 11);
}
