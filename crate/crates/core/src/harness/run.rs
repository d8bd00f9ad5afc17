//! Experiment orchestration for the four modes.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{
    paired_with_replicate_se, preset, uqr_decomposition_from_sample, DgpSample, IdentityCheck, OracleBundle,
    OracleOptions, OracleValue, StructuralDgp, StructuralSide, UqrDecomposition,
};
use crate::error::{MpeError, Result};
use crate::estimators::{
    cv_gini_mpe, cv_mean_mpe, cv_quantile_mpe, gini_mpe, mean_mpe, pairs_bootstrap, quantile_mpe_multi,
    BootstrapSummary, Dataset, FirstStageConfig, Method, MpeEstimate,
};
use crate::functionals::FunctionalSpec;
use crate::policy::{PolicyDescriptor, PolicySpec};
use crate::rng::replication_rng;

use super::checks::{run_suite, CheckOutcome};
use super::config::{ExperimentConfig, Mode};
use super::io::load_csv;

/// The oracle for the configured functional, with its structural side when
/// the oracle standard errors are computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub functional: FunctionalSpec,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structural: Option<OracleValue>,
    /// `|value − structural| / combined_se`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uqr: Option<UqrDecomposition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub value: f64,
    pub n_used: usize,
    pub n_trimmed: usize,
    pub grid_trimmed: usize,
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replications: usize,
    pub mean: f64,
    pub sd: f64,
    pub oracle: f64,
    pub bias: f64,
    pub rmse: f64,
    /// `sd / √R`.
    pub mc_se: f64,
}

impl Summary {
    pub fn new(values: &[f64], oracle: f64) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
        } else {
            f64::NAN
        };
        let rmse = (values.iter().map(|v| (v - oracle).powi(2)).sum::<f64>() / r).sqrt();
        Summary {
            replications: values.len(),
            mean,
            sd,
            oracle,
            bias: mean - oracle,
            rmse,
            mc_se: sd / r.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimStats {
    pub total_trimmed: usize,
    /// Mean over estimates of `n_trimmed / n`.
    pub mean_trimmed_share: f64,
    pub max_trimmed: usize,
    pub grid_trimmed: usize,
    /// Estimates that carry a warning.
    pub warnings: usize,
}

impl TrimStats {
    fn from_replications(reps: &[ReplicationResult], n: usize) -> Self {
        TrimStats {
            total_trimmed: reps.iter().map(|r| r.n_trimmed).sum(),
            mean_trimmed_share: reps.iter().map(|r| r.n_trimmed as f64 / n as f64).sum::<f64>() / reps.len() as f64,
            max_trimmed: reps.iter().map(|r| r.n_trimmed).max().unwrap_or(0),
            grid_trimmed: reps.iter().map(|r| r.grid_trimmed).sum(),
            warnings: reps.iter().filter(|r| r.warning).count(),
        }
    }

    fn from_estimate(e: &MpeEstimate) -> Self {
        TrimStats {
            total_trimmed: e.n_trimmed,
            mean_trimmed_share: e.n_trimmed as f64 / e.n as f64,
            max_trimmed: e.n_trimmed,
            grid_trimmed: e.grid_trimmed,
            warnings: usize::from(!e.warnings.is_empty()),
        }
    }
}

/// Everything a run produces. `wall_clock_seconds` is the only field that
/// varies between runs of the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<MpeEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replications: Vec<ReplicationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim: Option<TrimStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckOutcome>,
    pub wall_clock_seconds: f64,
}

impl ResultRecord {
    fn empty(cfg: &ExperimentConfig) -> Self {
        ResultRecord {
            config_hash: cfg.hash(),
            config: cfg.clone(),
            oracle: None,
            estimate: None,
            bootstrap: None,
            dropped_rows: None,
            replications: Vec::new(),
            summary: None,
            trim: None,
            checks: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Oracle values computed so far, keyed by design, policy, functional and
/// oracle settings.
#[derive(Debug, Clone, Default)]
pub struct OracleCache {
    values: BTreeMap<String, f64>,
}

impl OracleCache {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn cache_key(cfg: &ExperimentConfig) -> String {
    serde_json::json!({
        "dgp": cfg.dgp,
        "policy": cfg.policy.spec,
        "functional": cfg.functional.spec,
        "oracle": cfg.oracle,
    })
    .to_string()
}

/// The configured design.
pub fn resolve_dgp(cfg: &ExperimentConfig) -> Result<StructuralDgp> {
    let name = cfg
        .dgp
        .name
        .as_deref()
        .ok_or_else(|| MpeError::config(format!("{} mode requires `[dgp] name`", cfg.experiment.mode)))?;
    preset(name, &cfg.dgp.params)
}

/// The population policy of a simulation design. Mean-preserving policies
/// without an explicit centre use the design's known `E[D]`, else the mean of
/// `D` in `sample`.
pub fn population_policy(descriptor: &PolicyDescriptor, dgp: &StructuralDgp, sample: &DgpSample) -> Result<PolicySpec> {
    if let PolicyDescriptor::RankPreserving { .. } = descriptor {
        return Err(MpeError::config("rank-preserving policies are supported in estimate mode only"));
    }
    descriptor.build(&sample.d, dgp.mean_d())
}

/// Finite-difference oracle of the configured functional.
pub fn oracle_value(cfg: &ExperimentConfig, dgp: &StructuralDgp) -> Result<f64> {
    let opts = cfg.oracle.options();
    let sample = dgp.simulate(opts.n_oracle, opts.seed)?;
    let policy = population_policy(&cfg.policy.spec, dgp, &sample)?;
    OracleBundle::from_sample(dgp, &sample, &policy, opts.t_step, opts.scheme)?.mpe(&cfg.functional.spec)
}

fn oracle_report(cfg: &ExperimentConfig, dgp: &StructuralDgp) -> Result<OracleReport> {
    let opts: OracleOptions = cfg.oracle.options();
    let functional = cfg.functional.spec;
    let main = dgp.simulate(opts.n_oracle, opts.seed)?;
    let policy = population_policy(&cfg.policy.spec, dgp, &main)?;
    let pair = paired_with_replicate_se(dgp, &opts, |sample| {
        let bundle = OracleBundle::from_sample(dgp, sample, &policy, opts.t_step, opts.scheme)?;
        let side = StructuralSide::from_sample(dgp, sample, &policy, &opts.cond_kernel)?;
        Ok(vec![(bundle.mpe(&functional)?, side.mpe(&functional)?)])
    })?;
    let (oracle, structural) = pair[0];
    let check = IdentityCheck::new(functional, oracle, structural);
    let uqr = match functional {
        FunctionalSpec::Quantile { tau } if dgp.has_log_density_derivative() => {
            Some(uqr_decomposition_from_sample(dgp, &main, tau, &opts.cond_kernel)?)
        }
        _ => None,
    };
    Ok(OracleReport {
        functional,
        value: oracle.value,
        se: Some(oracle.se),
        structural: Some(structural),
        z: Some(check.z),
        uqr,
    })
}

/// One estimate of the configured functional with the configured method.
pub fn estimate_with(
    data: &Dataset,
    policy: &PolicySpec,
    functional: &FunctionalSpec,
    method: Method,
    control_variable: bool,
    cfg: &FirstStageConfig,
) -> Result<MpeEstimate> {
    let plugin_only = |what: &str| {
        if method == Method::Plugin {
            Ok(())
        } else {
            Err(MpeError::config(format!("the {what} MPE has a plug-in estimator only, not `{method}`")))
        }
    };
    match (*functional, control_variable) {
        (FunctionalSpec::Quantile { tau }, false) => {
            quantile_mpe_multi(data, policy, &[tau], method, cfg).map(|mut v| v.pop().expect("one level"))
        }
        (FunctionalSpec::Quantile { tau }, true) => cv_quantile_mpe(data, policy, tau, method, cfg),
        (FunctionalSpec::Mean, cv) => {
            plugin_only("mean")?;
            if cv {
                cv_mean_mpe(data, policy, cfg)
            } else {
                mean_mpe(data, policy, cfg)
            }
        }
        (FunctionalSpec::Gini, cv) => {
            plugin_only("Gini")?;
            if cv {
                cv_gini_mpe(data, policy, cfg)
            } else {
                gini_mpe(data, policy, cfg)
            }
        }
        (FunctionalSpec::IdAt { .. }, _) => Err(MpeError::config("no estimator is provided for the id_at functional")),
    }
}

fn estimate_configured(data: &Dataset, policy: &PolicySpec, cfg: &ExperimentConfig) -> Result<MpeEstimate> {
    estimate_with(
        data,
        policy,
        &cfg.functional.spec,
        cfg.estimator.method,
        cfg.estimator.control_variable,
        &cfg.first_stage,
    )
}

/// Replication `r` of a study: `n` draws from stream `r` of `seed`.
pub fn replication_sample(dgp: &StructuralDgp, n: usize, seed: u64, r: usize) -> Result<DgpSample> {
    dgp.simulate_rng(n, &mut replication_rng(seed, r as u64))
}

/// Apply `f` to replications `0..reps` in parallel. Results are in index
/// order; the error of the lowest failing index is returned, tagged with its
/// index and seed.
pub fn parallel_replications<T, F>(dgp: &StructuralDgp, n: usize, reps: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &DgpSample) -> Result<T> + Sync,
{
    let out: Vec<Result<T>> = (0..reps)
        .into_par_iter()
        .map(|r| replication_sample(dgp, n, seed, r).and_then(|s| f(r, &s)))
        .collect();
    out.into_iter()
        .enumerate()
        .map(|(r, res)| {
            res.map_err(|e| MpeError::Replication {
                replication: r,
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

fn run_mc(cfg: &ExperimentConfig, dgp: &StructuralDgp, cache: &mut OracleCache) -> Result<ResultRecord> {
    if let PolicyDescriptor::RankPreserving { .. } = cfg.policy.spec {
        return Err(MpeError::config("rank-preserving policies are supported in estimate mode only"));
    }
    let key = cache_key(cfg);
    let oracle = match cache.values.get(&key) {
        Some(v) => *v,
        None => {
            let v = oracle_value(cfg, dgp)?;
            cache.values.insert(key, v);
            v
        }
    };
    let e = &cfg.experiment;
    let reps = parallel_replications(dgp, e.n, e.replications, e.seed, |r, sample| {
        let data = sample.to_dataset()?;
        let policy = cfg.policy.spec.build(data.d(), dgp.mean_d())?;
        let first_stage = FirstStageConfig {
            seed: cfg.first_stage.seed.wrapping_add(r as u64),
            ..cfg.first_stage.clone()
        };
        let est = estimate_with(
            &data,
            &policy,
            &cfg.functional.spec,
            cfg.estimator.method,
            cfg.estimator.control_variable,
            &first_stage,
        )?;
        Ok(ReplicationResult {
            index: r,
            value: est.value,
            n_used: est.n_used,
            n_trimmed: est.n_trimmed,
            grid_trimmed: est.grid_trimmed,
            warning: est.trim_warning(),
        })
    })?;
    let values: Vec<f64> = reps.iter().map(|r| r.value).collect();
    let mut record = ResultRecord::empty(cfg);
    record.oracle = Some(OracleReport {
        functional: cfg.functional.spec,
        value: oracle,
        se: None,
        structural: None,
        z: None,
        uqr: None,
    });
    record.summary = Some(Summary::new(&values, oracle));
    record.trim = Some(TrimStats::from_replications(&reps, e.n));
    record.replications = reps;
    Ok(record)
}

fn run_estimate(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let path = cfg
        .experiment
        .data_path
        .as_deref()
        .ok_or_else(|| MpeError::config("estimate mode requires `data_path`"))?;
    let loaded = load_csv(path)?;
    let data = &loaded.data;
    let policy = cfg.policy.spec.build(data.d(), None)?;
    let est = estimate_configured(data, &policy, cfg)?;
    let mut record = ResultRecord::empty(cfg);
    if cfg.estimator.bootstrap > 0 {
        let boot = pairs_bootstrap(data, cfg.experiment.seed, cfg.estimator.bootstrap, |b| {
            estimate_configured(b, &policy, cfg).map(|e| e.value)
        })?;
        record.bootstrap = Some(boot);
    }
    record.trim = Some(TrimStats::from_estimate(&est));
    record.dropped_rows = Some(loaded.dropped_rows);
    record.estimate = Some(est);
    Ok(record)
}

/// Run one experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    run_with_cache(cfg, &mut OracleCache::default())
}

/// Run one experiment, sharing oracle values with earlier runs.
pub fn run_with_cache(cfg: &ExperimentConfig, cache: &mut OracleCache) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let mut record = match cfg.experiment.mode {
        Mode::Oracle => {
            let dgp = resolve_dgp(cfg)?;
            let report = oracle_report(cfg, &dgp)?;
            let mut record = ResultRecord::empty(cfg);
            record.oracle = Some(report);
            record
        }
        Mode::Estimate => run_estimate(cfg)?,
        Mode::Mc => run_mc(cfg, &resolve_dgp(cfg)?, cache)?,
        Mode::Check => {
            let mut record = ResultRecord::empty(cfg);
            record.checks = run_suite(cfg)?;
            record
        }
    };
    record.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Overrides;

    fn mc_config(reps: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&Overrides {
            mode: Some(Mode::Mc),
            dgp: Some("linear_exogenous".into()),
            n: Some(300),
            replications: Some(reps),
            seed: Some(11),
            ..Default::default()
        })
        .unwrap();
        cfg.oracle.n_oracle = 20_000;
        cfg
    }

    #[test]
    fn mc_records_are_ordered_and_extendable() {
        let mut cache = OracleCache::default();
        let a = run_with_cache(&mc_config(10), &mut cache).unwrap();
        let b = run_with_cache(&mc_config(12), &mut cache).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(a.replications.len(), 10);
        assert!(a.replications.iter().enumerate().all(|(i, r)| r.index == i));
        assert_eq!(a.replications[..], b.replications[..10]);
        let s = a.summary.unwrap();
        assert!((s.mean - 1.0).abs() < 0.2, "{s:?}");
        assert!(a.oracle.is_some());
    }

    #[test]
    fn replication_failures_carry_index_and_seed() {
        let dgp = preset("linear_exogenous", &BTreeMap::new()).unwrap();
        let err = parallel_replications(&dgp, 60, 4, 5, |r, _| if r >= 2 { Err(MpeError::estimation("boom")) } else { Ok(r) })
            .unwrap_err();
        match err {
            MpeError::Replication { replication, seed, .. } => assert_eq!((replication, seed), (2, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::new(&[1.0, 2.0, 3.0], 1.0);
        assert_eq!((s.mean, s.bias), (2.0, 1.0));
        assert!((s.sd - 1.0).abs() < 1e-15);
        assert!((s.rmse - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unsupported_combinations_are_config_errors() {
        let data = preset("linear_exogenous", &BTreeMap::new()).unwrap().simulate(100, 1).unwrap().to_dataset().unwrap();
        let cfg = FirstStageConfig::default();
        let p = PolicySpec::LocationShift;
        assert!(matches!(
            estimate_with(&data, &p, &FunctionalSpec::Mean, Method::Debiased, false, &cfg),
            Err(MpeError::Config(_))
        ));
        assert!(matches!(
            estimate_with(&data, &p, &FunctionalSpec::IdAt { y: 0.0 }, Method::Plugin, false, &cfg),
            Err(MpeError::Config(_))
        ));
        let mut mc = mc_config(10);
        mc.policy.spec = PolicyDescriptor::parse("rank_preserving").unwrap();
        assert!(matches!(run(&mc), Err(MpeError::Config(_))));
    }

    #[test]
    fn oracle_mode_reports_structural_side() {
        let mut cfg = mc_config(10);
        cfg.experiment.mode = Mode::Oracle;
        cfg.oracle.n_oracle = 50_000;
        let rec = run(&cfg).unwrap();
        let o = rec.oracle.unwrap();
        assert!((o.value - 1.0).abs() < 0.05, "{o:?}");
        assert!(o.structural.is_some() && o.uqr.is_some());
    }
}
