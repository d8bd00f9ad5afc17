use mpe_core::harness::{csv_rows, emit, run, ExperimentConfig, Format, Mode, Overrides, ResultRecord};
use proptest::prelude::*;

fn mc(reps: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.apply(&Overrides {
        mode: Some(Mode::Mc),
        dgp: Some("linear_exogenous".into()),
        policy: Some("mean_preserving:alpha=1".into()),
        n: Some(250),
        replications: Some(reps),
        seed: Some(seed),
        ..Default::default()
    })
    .unwrap();
    cfg.oracle.n_oracle = 20_000;
    cfg
}

#[test]
fn json_round_trip_recovers_the_summary() {
    let record = run(&mc(10, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit(&record, &path, Format::Json).unwrap();
    let back: ResultRecord = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let (a, b) = (record.summary.unwrap(), back.summary.unwrap());
    for (x, y) in [(a.mean, b.mean), (a.sd, b.sd), (a.bias, b.bias), (a.rmse, b.rmse), (a.mc_se, b.mc_se), (a.oracle, b.oracle)] {
        assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0), "{x} vs {y}");
    }
    assert_eq!(a.replications, b.replications);
    assert_eq!(back.config, record.config);
    assert_eq!(back.config_hash, record.config_hash);
}

#[test]
fn csv_has_replications_plus_summary() {
    let record = run(&mc(12, 4)).unwrap();
    let rows = csv_rows(&record);
    assert_eq!(rows.len(), 13);
    assert!(rows.iter().all(|r| r.config_hash == record.config_hash));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    emit(&record, &path, Format::Csv).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 14);
    assert!(text.lines().next().unwrap().starts_with("kind,config_hash"));
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = mc(10, 4);
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hash_depends_only_on_the_resolved_config(seed in 0u64..1_000_000, n in 50usize..5000) {
        let mut a = mc(10, seed);
        a.experiment.n = n;
        let b = a.clone();
        prop_assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.experiment.seed = seed + 1;
        prop_assert_ne!(a.hash(), c.hash());
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
