//! Experiment configuration: one TOML file with a section per component,
//! plus command-line overrides applied on top.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dgp::{DifferenceScheme, OracleOptions};
use crate::error::{MpeError, Result};
use crate::estimators::{FirstStageConfig, Method};
use crate::functionals::FunctionalSpec;
use crate::policy::PolicyDescriptor;

/// Smallest replication count accepted by a Monte Carlo study.
pub const MIN_REPLICATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Oracle,
    Estimate,
    #[serde(alias = "mc_study")]
    Mc,
    Check,
}

impl Mode {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "oracle" => Ok(Mode::Oracle),
            "estimate" => Ok(Mode::Estimate),
            "mc" | "mc_study" => Ok(Mode::Mc),
            "check" => Ok(Mode::Check),
            other => Err(MpeError::config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Oracle => "oracle",
            Mode::Estimate => "estimate",
            Mode::Mc => "mc",
            Mode::Check => "check",
        })
    }
}

/// `[experiment]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Mode,
    /// Master seed; replication `r` draws from stream `r` of this seed.
    pub seed: u64,
    /// Sample size of each Monte Carlo replication.
    pub n: usize,
    pub replications: usize,
    /// CSV input for estimate mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            mode: Mode::Oracle,
            seed: 1,
            n: 2000,
            replications: 100,
            data_path: None,
        }
    }
}

/// `[dgp]`: a preset name and numeric parameter overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

/// `[policy]`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    #[serde(with = "as_text")]
    pub spec: PolicyDescriptor,
}

/// `[functional]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalSection {
    #[serde(with = "as_text")]
    pub spec: FunctionalSpec,
}

impl Default for FunctionalSection {
    fn default() -> Self {
        FunctionalSection {
            spec: FunctionalSpec::Quantile { tau: 0.5 },
        }
    }
}

/// `[estimator]`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub method: Method,
    /// Condition on the estimated control variable instead of `(D, X)` alone.
    pub control_variable: bool,
    /// Pairs-bootstrap draws in estimate mode; 0 disables the bootstrap.
    pub bootstrap: usize,
}

/// `[oracle]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub n_oracle: usize,
    pub t_step: f64,
    pub seed: u64,
    pub scheme: DifferenceScheme,
    pub se_replications: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        let o = OracleOptions::default();
        OracleSection {
            n_oracle: o.n_oracle,
            t_step: o.t_step,
            seed: o.seed,
            scheme: o.scheme,
            se_replications: o.se_replications,
        }
    }
}

impl OracleSection {
    pub fn options(&self) -> OracleOptions {
        OracleOptions {
            t_step: self.t_step,
            n_oracle: self.n_oracle,
            seed: self.seed,
            scheme: self.scheme,
            se_replications: self.se_replications,
            ..OracleOptions::default()
        }
    }
}

/// `[check]`: sample sizes of the invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    /// Oracle sample size for the representation checks.
    pub n_oracle: usize,
    /// Estimation sample size for control-variable and identification checks.
    pub n_sample: usize,
    /// Sample size of the UQR decomposition check.
    pub n_uqr: usize,
    /// Tolerance of the oracle identities in combined standard errors.
    pub n_se: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            n_oracle: 1_000_000,
            n_sample: 10_000,
            n_uqr: 100_000,
            n_se: 3.0,
        }
    }
}

/// A whole experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub dgp: DgpSection,
    pub policy: PolicySection,
    pub functional: FunctionalSection,
    pub estimator: EstimatorSection,
    pub first_stage: FirstStageConfig,
    pub oracle: OracleSection,
    pub check: CheckSection,
}

/// Command-line overrides; set fields win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub dgp: Option<String>,
    pub policy: Option<String>,
    pub functional: Option<String>,
    /// `plugin`, `reweight`, `debiased`, optionally prefixed `cv_`.
    pub estimator: Option<String>,
    pub tau: Option<f64>,
    pub n: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub data_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MpeError::config(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(data), Some(dir)) = (&cfg.experiment.data_path, path.parent()) {
            if data.is_relative() && !data.exists() {
                cfg.experiment.data_path = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MpeError::config(format!("config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(m) = o.mode {
            self.experiment.mode = m;
        }
        if let Some(name) = &o.dgp {
            let (name, params) = crate::policy::split_descriptor(name)?;
            self.dgp.name = Some(name);
            self.dgp.params.extend(params);
        }
        if let Some(p) = &o.policy {
            self.policy.spec = PolicyDescriptor::parse(p)?;
        }
        if let Some(f) = &o.functional {
            self.functional.spec = FunctionalSpec::parse(f)?;
        }
        if let Some(e) = &o.estimator {
            let (cv, name) = match e.trim().strip_prefix("cv_") {
                Some(rest) => (true, rest),
                None => (false, e.trim()),
            };
            self.estimator.method = Method::parse(name)?;
            self.estimator.control_variable = cv;
        }
        if let Some(tau) = o.tau {
            self.functional.spec = FunctionalSpec::quantile(tau)?;
        }
        if let Some(n) = o.n {
            self.experiment.n = n;
        }
        if let Some(r) = o.replications {
            self.experiment.replications = r;
        }
        if let Some(s) = o.seed {
            self.experiment.seed = s;
        }
        if let Some(p) = &o.data_path {
            self.experiment.data_path = Some(p.clone());
        }
        Ok(())
    }

    /// Mode-consistent field presence and basic ranges.
    pub fn validate(&self) -> Result<()> {
        self.functional.spec.validate()?;
        self.first_stage.validate()?;
        let e = &self.experiment;
        match e.mode {
            Mode::Estimate => {
                if e.data_path.is_none() {
                    return Err(MpeError::config("estimate mode requires `data_path`"));
                }
            }
            Mode::Oracle => {
                self.require_dgp()?;
            }
            Mode::Mc => {
                self.require_dgp()?;
                if e.replications < MIN_REPLICATIONS {
                    return Err(MpeError::config(format!(
                        "mc mode requires at least {MIN_REPLICATIONS} replications, got {}",
                        e.replications
                    )));
                }
            }
            Mode::Check => {}
        }
        if matches!(e.mode, Mode::Oracle | Mode::Mc) {
            if !(self.oracle.t_step > 0.0 && self.oracle.t_step <= 0.05) {
                return Err(MpeError::config("oracle t_step must lie in (0, 0.05]"));
            }
            if self.oracle.n_oracle < 1000 {
                return Err(MpeError::config("oracle n_oracle must be at least 1000"));
            }
        }
        if e.mode == Mode::Check {
            let c = &self.check;
            if c.n_oracle < 1000 || c.n_sample < 500 || c.n_uqr < 500 || !(c.n_se > 0.0) {
                return Err(MpeError::config("check sizes are too small"));
            }
        }
        Ok(())
    }

    fn require_dgp(&self) -> Result<&str> {
        self.dgp
            .name
            .as_deref()
            .ok_or_else(|| MpeError::config(format!("{} mode requires `[dgp] name`", self.experiment.mode)))
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Serialize through `Display` and parse through the type's text grammar.
mod as_text {
    use super::*;

    pub trait TextForm: Sized + fmt::Display {
        fn from_text(text: &str) -> Result<Self>;
    }

    impl TextForm for PolicyDescriptor {
        fn from_text(text: &str) -> Result<Self> {
            PolicyDescriptor::parse(text)
        }
    }

    impl TextForm for FunctionalSpec {
        fn from_text(text: &str) -> Result<Self> {
            FunctionalSpec::parse(text)
        }
    }

    pub fn serialize<T: TextForm, S: Serializer>(value: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, T: TextForm, D: Deserializer<'de>>(d: D) -> std::result::Result<T, D::Error> {
        let text = String::deserialize(d)?;
        T::from_text(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[experiment]
mode = "mc_study"
seed = 7
n = 500
replications = 20

[dgp]
name = "gaussian_endogenous"
rho = 0.25

[policy]
spec = "mean_preserving:alpha=1"

[functional]
spec = "quantile:tau=0.25"

[estimator]
method = "debiased"

[first_stage]
folds = 3
"#;

    #[test]
    fn parses_sections_and_overrides() {
        let mut cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.experiment.mode, Mode::Mc);
        assert_eq!(cfg.dgp.params["rho"], 0.25);
        assert_eq!(cfg.first_stage.folds, 3);
        assert_eq!(cfg.functional.spec, FunctionalSpec::Quantile { tau: 0.25 });
        cfg.validate().unwrap();
        let o = Overrides {
            estimator: Some("cv_plugin".into()),
            tau: Some(0.75),
            n: Some(900),
            ..Default::default()
        };
        cfg.apply(&o).unwrap();
        assert!(cfg.estimator.control_variable);
        assert_eq!(cfg.estimator.method, Method::Plugin);
        assert_eq!(cfg.functional.spec, FunctionalSpec::Quantile { tau: 0.75 });
        assert_eq!(cfg.experiment.n, 900);
    }

    #[test]
    fn integer_overrides_and_round_trip() {
        let cfg = ExperimentConfig::from_toml_str("[dgp]\nname = \"linear_exogenous\"\nbeta = 2\n").unwrap();
        assert_eq!(cfg.dgp.params["beta"], 2.0);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn mode_consistency() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.mode = Mode::Estimate;
        assert!(matches!(cfg.validate(), Err(MpeError::Config(_))));
        cfg.experiment.mode = Mode::Mc;
        cfg.dgp.name = Some("linear_exogenous".into());
        cfg.experiment.replications = 5;
        assert!(cfg.validate().is_err());
        cfg.experiment.replications = 10;
        cfg.validate().unwrap();
        assert!(ExperimentConfig::from_toml_str("[experiment]\nbogus = 1\n").is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let b = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.experiment.seed = 8;
        assert_ne!(a.hash(), c.hash());
    }
}
