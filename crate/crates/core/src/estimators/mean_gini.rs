//! Mean and Gini MPE estimators.

use crate::distkit::{EmpiricalDistribution, TauGrid};
use crate::error::{MpeError, Result};
use crate::functionals::{hadamard_on_grid, DensityProfile, FunctionalSpec};
use crate::policy::PolicySpec;
use crate::smoothing::EquivalentKernel;

use super::first_stage::{first_stage_bandwidths, Design, FirstStage};
use super::quantile::{policy_weight, weighted_slope_sums};
use super::{BandwidthRecord, Dataset, FirstStageConfig, Method, MpeEstimate};

fn estimate(
    functional: FunctionalSpec,
    policy: &PolicySpec,
    cv: bool,
    n: usize,
    bandwidths: BandwidthRecord,
) -> MpeEstimate {
    MpeEstimate {
        value: f64::NAN,
        functional,
        policy: policy.descriptor(),
        method: Method::Plugin,
        control_variable: cv,
        n,
        n_used: 0,
        n_trimmed: 0,
        grid_trimmed: 0,
        bandwidths,
        fold_sizes: None,
        quantile: None,
        outcome_density: None,
        warnings: Vec::new(),
    }
}

pub(crate) fn mean_core(
    design: &Design,
    policy: &PolicySpec,
    cfg: &FirstStageConfig,
    cv: bool,
    cv_bandwidths: Option<Vec<f64>>,
) -> Result<MpeEstimate> {
    cfg.validate()?;
    let bw = first_stage_bandwidths(design, cfg)?;
    let stage = FirstStage::new(design, bw.clone(), cfg)?;
    let mut ek = EquivalentKernel::default();
    let mut point = vec![0.0; design.dim()];
    let (mut acc, mut n_used, mut n_trimmed) = (0.0, 0usize, 0usize);
    for i in 0..design.n() {
        let Some(pd) = policy_weight(policy, design.d()[i])? else {
            n_trimmed += 1;
            continue;
        };
        if pd == 0.0 {
            n_used += 1;
            continue;
        }
        design.point(i, &mut point);
        if !stage.fit(&point, &mut ek) {
            n_trimmed += 1;
            continue;
        }
        acc += pd * ek.slope_of(|j| design.y[j]);
        n_used += 1;
    }
    if n_used == 0 {
        return Err(MpeError::estimation("every observation was trimmed"));
    }
    let record = BandwidthRecord {
        first_stage: bw,
        outcome: 0.0,
        riesz: None,
        control_variable: cv_bandwidths,
    };
    let mut est = estimate(FunctionalSpec::Mean, policy, cv, design.n(), record);
    est.value = acc / n_used as f64;
    est.n_used = n_used;
    est.n_trimmed = n_trimmed;
    est.note_trimming();
    Ok(est)
}

pub(crate) fn gini_core(
    design: &Design,
    policy: &PolicySpec,
    cfg: &FirstStageConfig,
    cv: bool,
    cv_bandwidths: Option<Vec<f64>>,
) -> Result<MpeEstimate> {
    cfg.validate()?;
    let dist = EmpiricalDistribution::from_slice(&design.y)?;
    dist.gini()?;
    let profile = DensityProfile::new(&dist, &cfg.outcome_kernel, &TauGrid::default())?;
    let bw = first_stage_bandwidths(design, cfg)?;
    let sums = weighted_slope_sums(design, policy, bw.clone(), profile.quantiles(), cfg)?;
    if sums.n_used == 0 {
        return Err(MpeError::estimation("every observation was trimmed"));
    }
    // h(q̂_τ) = Ê[π̇(D)·∂_d F̂(q̂_τ | D, X)], so that −h/f̂_Y is β̂^UQR(τ; π̇).
    let h: Vec<f64> = sums.sums.iter().map(|s| s / design.n() as f64).collect();
    let value = hadamard_on_grid(&FunctionalSpec::Gini, &profile, &h, |_| f64::NAN)?;
    let record = BandwidthRecord {
        first_stage: bw,
        outcome: profile.bandwidth(),
        riesz: None,
        control_variable: cv_bandwidths,
    };
    let mut est = estimate(FunctionalSpec::Gini, policy, cv, design.n(), record);
    est.value = value;
    est.n_used = sums.n_used;
    est.n_trimmed = sums.n_trimmed;
    est.grid_trimmed = profile.n_trimmed();
    est.note_trimming();
    Ok(est)
}

/// `θ̂_μ = Ê_n[π̇(D)·∂_d Ê[Y | D, X]]` with the local-linear slope.
pub fn mean_mpe(data: &Dataset, policy: &PolicySpec, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    mean_core(&Design::new(data, None), policy, cfg, false, None)
}

/// `(2/μ̂²)·Σ_τ φ̂(τ)·β̂^UQR(τ; π̇)·Δτ` over the kept τ-grid.
pub fn gini_mpe(data: &Dataset, policy: &PolicySpec, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    gini_core(&Design::new(data, None), policy, cfg, false, None)
}
