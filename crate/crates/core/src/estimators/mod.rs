//! Data-facing MPE estimators.
//!
//! Every estimator works from a [`Dataset`] (observables only), a policy and a
//! [`FirstStageConfig`]. First stages are local-linear fits in `(D, X)` with
//! product Gaussian kernels; the `D`-slope of the fit delivers `∂_d F̂` and
//! `∂_d Ê[Y | D, X]` directly.

mod bootstrap;
mod control;
pub(crate) mod first_stage;
mod mean_gini;
pub(crate) mod quantile;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distkit::KernelSpec;
use crate::error::{MpeError, Result};
use crate::functionals::FunctionalSpec;
use crate::policy::PolicyDescriptor;

pub use bootstrap::{pairs_bootstrap, BootstrapSummary, DEFAULT_BOOTSTRAP_DRAWS};
pub use control::{
    control_variable, cv_debiased_quantile_mpe, cv_gini_mpe, cv_mean_mpe, cv_plugin_quantile_mpe,
    cv_quantile_mpe, cv_quantile_mpe_multi, cv_reweight_quantile_mpe, ks_uniform, ControlVariable,
};
pub use first_stage::{cond_cdf, cond_cdf_dderiv, riesz_representer};
pub use mean_gini::{gini_mpe, mean_mpe};
pub use quantile::{
    debiased_quantile_mpe, plugin_quantile_mpe, quantile_mpe_multi, reweight_quantile_mpe, uqr_estimand,
};

/// Smallest sample any nonparametric estimator accepts.
pub const MIN_OBSERVATIONS: usize = 50;
/// Share of trimmed observations above which an estimate carries a warning.
pub const TRIM_WARNING_SHARE: f64 = 0.2;

/// Observables `(Y, D, X, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<f64>,
    x: Vec<Vec<f64>>,
    z: Option<Vec<f64>>,
}

impl Dataset {
    /// `x` holds covariate columns.
    pub fn new(y: Vec<f64>, d: Vec<f64>, x: Vec<Vec<f64>>, z: Option<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if d.len() != n || x.iter().any(|c| c.len() != n) || z.as_ref().is_some_and(|c| c.len() != n) {
            return Err(MpeError::config("dataset columns differ in length"));
        }
        if n < MIN_OBSERVATIONS {
            return Err(MpeError::config(format!(
                "dataset has {n} observations; at least {MIN_OBSERVATIONS} are required"
            )));
        }
        let finite = |c: &[f64]| c.iter().all(|v| v.is_finite());
        if !(finite(&y) && finite(&d) && x.iter().all(|c| finite(c)) && z.as_deref().is_none_or(finite)) {
            return Err(MpeError::config("dataset contains non-finite values"));
        }
        Ok(Dataset { y, d, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn z(&self) -> Option<&[f64]> {
        self.z.as_deref()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let pick = |c: &[f64]| idx.iter().map(|i| c[*i]).collect::<Vec<_>>();
        Dataset {
            y: pick(&self.y),
            d: pick(&self.d),
            x: self.x.iter().map(|c| pick(c)).collect(),
            z: self.z.as_deref().map(pick),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Plugin,
    Reweight,
    Debiased,
}

impl Method {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "plugin" => Ok(Method::Plugin),
            "reweight" => Ok(Method::Reweight),
            "debiased" => Ok(Method::Debiased),
            other => Err(MpeError::config(format!("unknown estimator `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Plugin => "plugin",
            Method::Reweight => "reweight",
            Method::Debiased => "debiased",
        })
    }
}

/// Tuning of the first-stage smoothers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirstStageConfig {
    /// Outcome density `f̂_Y` and the reweighting kernel in `Y`.
    pub outcome_kernel: KernelSpec,
    /// Explicit first-stage bandwidths, one per conditioning variable.
    pub bandwidths: Option<Vec<f64>>,
    /// Multiplier on the rule-of-thumb first-stage bandwidths.
    pub bandwidth_scale: f64,
    /// Multiplier on the rule-of-thumb bandwidths of the `(D, X)` density.
    pub riesz_bandwidth_scale: f64,
    /// Density floor for `f̂_Y(q̂_τ)` and `f̂_{D,X}`.
    pub trim_floor: f64,
    /// Effective local sample size below which a point is trimmed.
    pub min_local_ess: f64,
    pub folds: usize,
    /// Conditional-rank search range and number of equispaced levels.
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha_points: usize,
    /// Size of the outcome grid for conditional CDF rearrangement.
    pub y_grid: usize,
    /// Seed of the cross-fitting fold permutation.
    pub seed: u64,
}

impl Default for FirstStageConfig {
    fn default() -> Self {
        FirstStageConfig {
            outcome_kernel: KernelSpec::gaussian(),
            bandwidths: None,
            bandwidth_scale: 1.0,
            riesz_bandwidth_scale: 1.0,
            trim_floor: 1e-4,
            min_local_ess: 20.0,
            folds: 5,
            alpha_lo: 0.01,
            alpha_hi: 0.99,
            alpha_points: 99,
            y_grid: 256,
            seed: 0,
        }
    }
}

impl FirstStageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(MpeError::config("cross-fitting needs at least 2 folds"));
        }
        if !(self.trim_floor > 0.0) {
            return Err(MpeError::config("trim_floor must be positive"));
        }
        if !(self.bandwidth_scale > 0.0 && self.riesz_bandwidth_scale > 0.0) {
            return Err(MpeError::config("bandwidth scales must be positive"));
        }
        if !(0.0 < self.alpha_lo && self.alpha_lo < self.alpha_hi && self.alpha_hi < 1.0) || self.alpha_points < 2 {
            return Err(MpeError::config("alpha grid must satisfy 0 < lo < hi < 1 with ≥ 2 points"));
        }
        if self.y_grid < 8 {
            return Err(MpeError::config("y_grid needs at least 8 points"));
        }
        if let Some(h) = &self.bandwidths {
            if h.iter().any(|v| !(*v > 0.0)) {
                return Err(MpeError::config("explicit bandwidths must be positive"));
            }
        }
        Ok(())
    }

    /// Equispaced conditional-rank levels.
    pub fn alpha_grid(&self) -> Vec<f64> {
        let m = self.alpha_points;
        (0..m)
            .map(|j| self.alpha_lo + (self.alpha_hi - self.alpha_lo) * j as f64 / (m - 1) as f64)
            .collect()
    }
}

/// Resolved bandwidths of one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BandwidthRecord {
    /// First-stage bandwidths, ordered `D`, then `V̂` if used, then `X₁..X_k`.
    pub first_stage: Vec<f64>,
    pub outcome: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riesz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_variable: Option<Vec<f64>>,
}

/// Estimator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpeEstimate {
    pub value: f64,
    pub functional: FunctionalSpec,
    pub policy: PolicyDescriptor,
    pub method: Method,
    pub control_variable: bool,
    pub n: usize,
    pub n_used: usize,
    pub n_trimmed: usize,
    /// Density-trimmed τ-grid points (mean and Gini functionals).
    pub grid_trimmed: usize,
    pub bandwidths: BandwidthRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MpeEstimate {
    pub(crate) fn note_trimming(&mut self) {
        if self.n > 0 && self.n_trimmed as f64 > TRIM_WARNING_SHARE * self.n as f64 {
            self.warnings.push(format!(
                "{} of {} observations trimmed (more than {:.0}%)",
                self.n_trimmed,
                self.n,
                100.0 * TRIM_WARNING_SHARE
            ));
        }
    }

    pub fn trim_warning(&self) -> bool {
        !self.warnings.is_empty()
    }
}
