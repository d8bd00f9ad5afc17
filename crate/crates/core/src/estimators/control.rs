//! Control-variable path for triangular designs: `V̂ = F̂_{D|Z,X}(D | Z, X)`
//! joins `D` and `X` in every first stage.

use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};
use crate::policy::PolicySpec;
use crate::smoothing::{rule_of_thumb_bandwidths, EquivalentKernel, LocalLinear};

use super::first_stage::Design;
use super::mean_gini::{gini_core, mean_core};
use super::quantile::quantile_dispatch;
use super::{Dataset, FirstStageConfig, Method, MpeEstimate};

const CLIP_LO: f64 = 0.001;
const CLIP_HI: f64 = 0.999;
/// Standard deviation of `V̂` below which selection looks degenerate
/// (the uniform law has 0.289).
const DISPERSION_WARNING_SD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVariable {
    pub values: Vec<f64>,
    /// Bandwidths of the `(Z, X)` local-linear fit.
    pub bandwidths: Vec<f64>,
    pub n_trimmed: usize,
    pub dispersion_warning: bool,
}

/// `v̂_i = F̂_{D|Z,X}(D_i | Z_i, X_i)` by local-linear regression of
/// `1{D ≤ D_i}` on `(Z, X)`, clipped to `[0.001, 0.999]`. Points with a
/// singular local design take the unconditional rank instead and are counted.
pub fn control_variable(data: &Dataset, cfg: &FirstStageConfig) -> Result<ControlVariable> {
    cfg.validate()?;
    let z = data
        .z()
        .ok_or_else(|| MpeError::config("the control-variable path needs a `z` column"))?;
    let mut cols: Vec<&[f64]> = vec![z];
    cols.extend(data.x().iter().map(Vec::as_slice));
    let bandwidths: Vec<f64> = rule_of_thumb_bandwidths(&cols)?
        .into_iter()
        .map(|h| h * cfg.bandwidth_scale)
        .collect();
    let ll = LocalLinear::new(&cols, bandwidths.clone())?;
    let d = data.d();
    let n = data.n();
    let mut ek = EquivalentKernel::default();
    let mut point = vec![0.0; cols.len()];
    let mut values = Vec::with_capacity(n);
    let mut n_trimmed = 0;
    let mut sorted_d = d.to_vec();
    sorted_d.sort_by(f64::total_cmp);
    for i in 0..n {
        for (p, c) in point.iter_mut().zip(&cols) {
            *p = c[i];
        }
        let v = if ll.fit_into(&point, &mut ek) && ek.effective_size >= cfg.min_local_ess {
            ek.level_of(|j| if d[j] <= d[i] { 1.0 } else { 0.0 })
        } else {
            n_trimmed += 1;
            sorted_d.partition_point(|v| *v <= d[i]) as f64 / n as f64
        };
        values.push(v.clamp(CLIP_LO, CLIP_HI));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    Ok(ControlVariable {
        values,
        bandwidths,
        n_trimmed,
        dispersion_warning: sd < DISPERSION_WARNING_SD,
    })
}

fn cv_design(data: &Dataset, cfg: &FirstStageConfig) -> Result<(Design, ControlVariable)> {
    let cv = control_variable(data, cfg)?;
    Ok((Design::new(data, Some(&cv.values)), cv))
}

fn annotate(mut est: MpeEstimate, cv: &ControlVariable) -> MpeEstimate {
    if cv.dispersion_warning {
        est.warnings
            .push("control variable has little dispersion: selection looks degenerate".into());
    }
    est
}

/// Quantile MPE with `(D, V̂, X)` as conditioning set.
pub fn cv_quantile_mpe(
    data: &Dataset,
    policy: &PolicySpec,
    tau: f64,
    method: Method,
    cfg: &FirstStageConfig,
) -> Result<MpeEstimate> {
    cv_quantile_mpe_multi(data, policy, &[tau], method, cfg).map(|mut v| v.pop().expect("one level"))
}

pub fn cv_quantile_mpe_multi(
    data: &Dataset,
    policy: &PolicySpec,
    taus: &[f64],
    method: Method,
    cfg: &FirstStageConfig,
) -> Result<Vec<MpeEstimate>> {
    let (design, cv) = cv_design(data, cfg)?;
    let out = quantile_dispatch(&design, policy, taus, method, cfg, true, Some(cv.bandwidths.clone()))?;
    Ok(out.into_iter().map(|e| annotate(e, &cv)).collect())
}

pub fn cv_plugin_quantile_mpe(data: &Dataset, policy: &PolicySpec, tau: f64, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    cv_quantile_mpe(data, policy, tau, Method::Plugin, cfg)
}

pub fn cv_reweight_quantile_mpe(data: &Dataset, policy: &PolicySpec, tau: f64, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    cv_quantile_mpe(data, policy, tau, Method::Reweight, cfg)
}

pub fn cv_debiased_quantile_mpe(data: &Dataset, policy: &PolicySpec, tau: f64, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    cv_quantile_mpe(data, policy, tau, Method::Debiased, cfg)
}

pub fn cv_mean_mpe(data: &Dataset, policy: &PolicySpec, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    let (design, cv) = cv_design(data, cfg)?;
    mean_core(&design, policy, cfg, true, Some(cv.bandwidths.clone())).map(|e| annotate(e, &cv))
}

pub fn cv_gini_mpe(data: &Dataset, policy: &PolicySpec, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    let (design, cv) = cv_design(data, cfg)?;
    gini_core(&design, policy, cfg, true, Some(cv.bandwidths.clone())).map(|e| annotate(e, &cv))
}

/// One-sample Kolmogorov–Smirnov distance to the uniform law on `[0, 1]`.
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let x = x.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
