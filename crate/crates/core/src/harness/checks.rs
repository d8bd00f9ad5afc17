//! The invariant suite run by check mode: oracle identities, the UQR
//! decomposition, identification of the single-equation and control-variable
//! estimands, score orthogonality, the Riesz identity and finite-difference
//! checks of the Hadamard derivatives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dgp::{
    oracle_mpe, oracle_uqr_decomposition, paired_with_replicate_se, preset, uqr_decomposition_from_sample,
    with_replicate_se, IdentityCheck, OracleBundle, OracleOptions, StructuralDgp, StructuralSide,
    COMBINED_SE_FLOOR,
};
use crate::distkit::{normal_cdf, normal_pdf, EmpiricalDistribution, Kernel, KernelSpec};
use crate::error::{MpeError, Result};
use crate::estimators::first_stage::{Design, RieszFit};
use crate::estimators::quantile::orthogonal_score;
use crate::estimators::{
    control_variable, cv_plugin_quantile_mpe, ks_uniform, plugin_quantile_mpe, uqr_estimand, FirstStageConfig,
};
use crate::functionals::{hadamard_apply, DirectionFunction, FunctionalSpec};
use crate::policy::PolicySpec;

use super::config::ExperimentConfig;

/// One pass/fail line of the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub group: String,
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub passed: bool,
}

impl CheckOutcome {
    pub fn new(group: &str, name: impl Into<String>, value: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let passed = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        CheckOutcome {
            group: group.into(),
            name: name.into(),
            value,
            lower,
            upper,
            passed,
        }
    }

    pub fn at_most(group: &str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(group, name, value, None, Some(bound))
    }

    pub fn at_least(group: &str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(group, name, value, Some(bound), None)
    }
}

pub const GROUP_STRUCTURAL: &str = "structural_representation";
pub const GROUP_QUANTILE: &str = "quantile_representation";
pub const GROUP_UQR: &str = "uqr_decomposition";
pub const GROUP_SINGLE_EQUATION: &str = "single_equation_identification";
pub const GROUP_CV_UNIFORM: &str = "control_variable_uniformity";
pub const GROUP_CV_IDENTIFICATION: &str = "control_variable_identification";
pub const GROUP_ORTHOGONALITY: &str = "score_orthogonality";
pub const GROUP_RIESZ: &str = "riesz_identity";
pub const GROUP_HADAMARD: &str = "hadamard_derivative";

/// Presets and policies of the representation checks.
pub const REPRESENTATION_PRESETS: [&str; 3] = ["linear_exogenous", "quadratic_exogenous", "gaussian_endogenous"];
pub const REPRESENTATION_TAUS: [f64; 3] = [0.25, 0.5, 0.75];

fn default_preset(name: &str) -> StructuralDgp {
    preset(name, &BTreeMap::new()).expect("registered preset")
}

fn representation_policies(dgp: &StructuralDgp) -> Result<Vec<PolicySpec>> {
    Ok(vec![
        PolicySpec::LocationShift,
        PolicySpec::mean_preserving(1.0, dgp.mean_d().unwrap_or(0.0))?,
    ])
}

fn identity_outcome(group: &str, label: String, check: &IdentityCheck, n_se: f64) -> CheckOutcome {
    CheckOutcome::at_most(
        group,
        format!(
            "{label}: oracle {:.5} ± {:.5}, structural {:.5} ± {:.5}",
            check.oracle.value, check.oracle.se, check.structural.value, check.structural.se
        ),
        check.z,
        n_se,
    )
}

/// The finite-difference oracle against the structural side for `id_at(median)`,
/// three quantiles and the mean, and the quantile oracle against
/// `Ê[π̇(D)·∂_d m | Y = q̂_τ]`, all on shared draws. `z` values are in
/// combined Monte Carlo standard errors.
pub fn representation_suite(dgp: &StructuralDgp, policy: &PolicySpec, opts: &OracleOptions, n_se: f64) -> Result<Vec<CheckOutcome>> {
    let median = EmpiricalDistribution::new(dgp.simulate(opts.n_oracle, opts.seed)?.y)?.quantile(0.5)?;
    let mut functionals = vec![FunctionalSpec::id_at(median)?];
    for tau in REPRESENTATION_TAUS {
        functionals.push(FunctionalSpec::quantile(tau)?);
    }
    functionals.push(FunctionalSpec::Mean);
    let pairs = paired_with_replicate_se(dgp, opts, |sample| {
        let bundle = OracleBundle::from_sample(dgp, sample, policy, opts.t_step, opts.scheme)?;
        let side = StructuralSide::from_sample(dgp, sample, policy, &opts.cond_kernel)?;
        let mut out = Vec::with_capacity(functionals.len() + REPRESENTATION_TAUS.len());
        for f in &functionals {
            out.push((bundle.mpe(f)?, side.mpe(f)?));
        }
        for tau in REPRESENTATION_TAUS {
            let q = side.outcome().quantile(tau)?;
            out.push((bundle.mpe(&FunctionalSpec::Quantile { tau })?, side.conditional_effect(q)));
        }
        Ok(out)
    })?;
    let tag = format!("{} × {}", dgp.name(), policy.descriptor());
    let mut outcomes = Vec::with_capacity(pairs.len());
    for (j, (a, b)) in pairs.into_iter().enumerate() {
        let (group, functional) = if j < functionals.len() {
            (GROUP_STRUCTURAL, functionals[j])
        } else {
            (GROUP_QUANTILE, FunctionalSpec::Quantile { tau: REPRESENTATION_TAUS[j - functionals.len()] })
        };
        let check = IdentityCheck::new(functional, a, b);
        outcomes.push(identity_outcome(group, format!("{tag} × {functional}"), &check, n_se));
    }
    Ok(outcomes)
}

/// The sample UQR estimand on the endogenous Gaussian design against the
/// oracle `lasd − bias`, and the oracle bias under exogeneity.
pub fn uqr_suite(n_sample: usize, opts: &OracleOptions, n_se: f64) -> Result<Vec<CheckOutcome>> {
    let tau = 0.5;
    let endo = preset("gaussian_endogenous", &BTreeMap::from([("rho".to_string(), 0.5)]))?;
    let oracle = oracle_uqr_decomposition(&endo, tau, opts.n_oracle, opts.seed, &opts.cond_kernel)?;
    let data = endo.simulate(n_sample, opts.seed.wrapping_add(1))?.to_dataset()?;
    let beta = uqr_estimand(&data, tau, &FirstStageConfig::default())?;
    let target = oracle.lasd_term - oracle.bias_term;
    let mut out = vec![CheckOutcome::at_most(
        GROUP_UQR,
        format!(
            "gaussian_endogenous(rho=0.5): sample UQR {beta:.4} vs lasd {:.4} − bias {:.4}",
            oracle.lasd_term, oracle.bias_term
        ),
        (beta - target).abs(),
        0.1,
    )];
    let lin = default_preset("linear_exogenous");
    let bias = with_replicate_se(&lin, opts, |s| {
        Ok(uqr_decomposition_from_sample(&lin, s, tau, &opts.cond_kernel)?.bias_term)
    })?;
    out.push(CheckOutcome::at_most(
        GROUP_UQR,
        format!("linear_exogenous: oracle bias {:.2e} ± {:.2e} in standard errors", bias.value, bias.se),
        bias.value.abs() / bias.se.max(COMBINED_SE_FLOOR),
        n_se,
    ));
    Ok(out)
}

/// Under exogeneity the plug-in estimand recovers the oracle MPE.
pub fn single_equation_suite(n_sample: usize, opts: &OracleOptions) -> Result<Vec<CheckOutcome>> {
    let dgp = default_preset("uniform_quadratic");
    let policy = PolicySpec::LocationShift;
    let f = FunctionalSpec::Quantile { tau: 0.5 };
    let oracle = oracle_mpe(&dgp, &policy, &f, opts.t_step, opts.n_oracle, opts.seed)?;
    let data = dgp.simulate(n_sample, opts.seed.wrapping_add(2))?.to_dataset()?;
    let est = plugin_quantile_mpe(&data, &policy, 0.5, &FirstStageConfig::default())?.value;
    Ok(vec![CheckOutcome::at_most(
        GROUP_SINGLE_EQUATION,
        format!("uniform_quadratic × location_shift × quantile(0.5): plugin {est:.4} vs oracle {oracle:.4}"),
        (est - oracle).abs(),
        0.15,
    )])
}

/// `V̂` is uniform on the triangular design, and conditioning on it removes the
/// endogeneity bias of the plug-in estimator.
pub fn control_variable_suite(n_sample: usize, opts: &OracleOptions) -> Result<Vec<CheckOutcome>> {
    let dgp = default_preset("triangular_normal");
    let cfg = FirstStageConfig::default();
    let data = dgp.simulate(n_sample, opts.seed.wrapping_add(3))?.to_dataset()?;
    let cv = control_variable(&data, &cfg)?;
    let ks = ks_uniform(&cv.values);
    let policy = PolicySpec::LocationShift;
    let oracle = oracle_mpe(&dgp, &policy, &FunctionalSpec::Quantile { tau: 0.5 }, opts.t_step, opts.n_oracle, opts.seed)?;
    let with_cv = cv_plugin_quantile_mpe(&data, &policy, 0.5, &cfg)?.value;
    let naive = plugin_quantile_mpe(&data, &policy, 0.5, &cfg)?.value;
    Ok(vec![
        CheckOutcome::at_most(GROUP_CV_UNIFORM, format!("triangular_normal n={n_sample}: KS distance of V̂ to U(0,1)"), ks, 0.03),
        CheckOutcome::at_most(
            GROUP_CV_IDENTIFICATION,
            format!("control-variable plugin {with_cv:.4} vs oracle {oracle:.4}"),
            (with_cv - oracle).abs(),
            0.2,
        ),
        CheckOutcome::at_least(
            GROUP_CV_IDENTIFICATION,
            format!("naive plugin {naive:.4} is biased against oracle {oracle:.4}"),
            (naive - oracle).abs(),
            0.1,
        ),
    ])
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Moment sensitivity along joint nuisance perturbations `γ₀ + r·δγ`,
/// `α₀ + r·δα` on the exogenous linear design, by quadrature over `D ~ N(0,1)`
/// with `γ₀(d) = Φ(q − d)` and `α₀(d) = −d`. Returns the log-log slopes of
/// `|M(r) − M(0)|` for the orthogonal score and for the plug-in moment.
pub fn orthogonality_slopes() -> (f64, f64) {
    let q = 0.0;
    let steps = 8000;
    let (lo, hi) = (-10.0, 10.0);
    let dd = (hi - lo) / steps as f64;
    let delta_gamma = |d: f64| normal_pdf(d - 0.5);
    let delta_gamma_slope = |d: f64| -(d - 0.5) * normal_pdf(d - 0.5);
    let delta_alpha = |d: f64| 1.0 + 0.5 * d;
    let moments = |r: f64| -> (f64, f64) {
        let (mut orth, mut plug) = (0.0, 0.0);
        for k in 0..=steps {
            let d = lo + dd * k as f64;
            let w = if k == 0 || k == steps { 0.5 * dd } else { dd } * normal_pdf(d);
            let gamma0 = normal_cdf(q - d);
            let gamma = gamma0 + r * delta_gamma(d);
            let slope = -normal_pdf(q - d) + r * delta_gamma_slope(d);
            let alpha = -d + r * delta_alpha(d);
            // E[1{Y ≤ q} | D = d] = γ₀(d).
            orth += w * orthogonal_score(1.0, slope, alpha, gamma0, gamma);
            plug += w * slope;
        }
        (orth, plug)
    };
    let (m0, p0) = moments(0.0);
    let rs = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let (mut so, mut sp) = (Vec::new(), Vec::new());
    for r in rs {
        let (m, p) = moments(r);
        so.push((m - m0).abs());
        sp.push((p - p0).abs());
    }
    (log_log_slope(&rs, &so), log_log_slope(&rs, &sp))
}

pub fn orthogonality_suite() -> Vec<CheckOutcome> {
    let (orth, plug) = orthogonality_slopes();
    vec![
        CheckOutcome::at_least(GROUP_ORTHOGONALITY, "orthogonal score: log-log sensitivity slope", orth, 1.7),
        CheckOutcome::at_most(GROUP_ORTHOGONALITY, "plug-in moment for contrast: log-log sensitivity slope", plug, 1.3),
    ]
}

/// Relative errors of `Ê_n[α̂(D)·g(D)] = −Ê_n[π̇(D)·∂_d g(D)]` for
/// `g(d) = d` and `g(d) = sin d` on a sample of the exogenous linear design,
/// averaging both sides over the untrimmed observations.
pub fn riesz_errors(n_sample: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    let dgp = default_preset("linear_exogenous");
    let data = dgp.simulate(n_sample, seed)?.to_dataset()?;
    let design = Design::new(&data, None);
    let fit = RieszFit::new(&design, &FirstStageConfig::default())?;
    let policy = PolicySpec::LocationShift;
    let tests: [(&str, fn(f64) -> f64, fn(f64) -> f64); 2] = [("g(d) = d", |d| d, |_| 1.0), ("g(d) = sin d", f64::sin, f64::cos)];
    let (mut lhs, mut rhs, mut used) = ([0.0; 2], [0.0; 2], 0usize);
    for &d in data.d() {
        let Some(alpha) = fit.alpha(&policy, &[d]) else { continue };
        let pi_dot = policy.pi_dot(d)?;
        used += 1;
        for (j, (_, g, dg)) in tests.iter().enumerate() {
            lhs[j] += alpha * g(d);
            rhs[j] -= pi_dot * dg(d);
        }
    }
    if used == 0 {
        return Err(MpeError::trimmed("every observation trimmed in the Riesz fit", data.n()));
    }
    let m = used as f64;
    Ok(tests
        .iter()
        .enumerate()
        .map(|(j, (name, _, _))| {
            let (l, r) = (lhs[j] / m, rhs[j] / m);
            (format!("{name}: Ê[α̂g] = {l:.4}, −Ê[π̇ g′] = {r:.4} over {used} points"), (l - r).abs() / r.abs())
        })
        .collect())
}

pub fn riesz_suite(n_sample: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(riesz_errors(n_sample, seed)?
        .into_iter()
        .map(|(name, err)| CheckOutcome::at_most(GROUP_RIESZ, name, err, 0.05))
        .collect())
}

/// Steps of the finite-difference suite.
pub const HADAMARD_STEPS: [f64; 3] = [0.1, 0.05, 0.01];

/// `|(Γ(F_t) − Γ(F_0))/t − Γ'_F(h)|` at each step, where `F_t` is the law of
/// `(D + t)²` with `D ~ U(1, 2)` realized on a quantile-spaced sample and
/// `h = ∂_t F_t|₀ ≡ −1` on the support.
pub fn hadamard_fd_errors(functional: &FunctionalSpec) -> Result<Vec<f64>> {
    let n = 200_000;
    let dgp = default_preset("uniform_quadratic");
    let policy = PolicySpec::LocationShift;
    let law = |t: f64| -> Result<EmpiricalDistribution> {
        let y = (0..n)
            .map(|i| {
                let d = 1.0 + (i as f64 + 0.5) / n as f64;
                Ok(dgp.m(policy.apply(d, t)?, &[], 0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        EmpiricalDistribution::new(y)
    };
    let base = law(0.0)?;
    let h = DirectionFunction::from_points(vec![1.0, 4.0], vec![-1.0, -1.0])?;
    let derivative = hadamard_apply(functional, &base, &KernelSpec::fixed(Kernel::Gaussian, 0.002), &h)?;
    let g0 = functional.eval(&base)?;
    HADAMARD_STEPS
        .iter()
        .map(|t| Ok(((functional.eval(&law(*t)?)? - g0) / t - derivative).abs()))
        .collect()
}

/// The error ratio between consecutive steps must track the step ratio
/// within a factor of two.
pub fn hadamard_suite() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for f in [FunctionalSpec::Quantile { tau: 0.5 }, FunctionalSpec::Mean, FunctionalSpec::Gini] {
        let e = hadamard_fd_errors(&f)?;
        for w in 0..HADAMARD_STEPS.len() - 1 {
            let (t0, t1) = (HADAMARD_STEPS[w], HADAMARD_STEPS[w + 1]);
            let scaled = (e[w + 1] / e[w]) / (t1 / t0);
            out.push(CheckOutcome::new(
                GROUP_HADAMARD,
                format!("{f}: error {:.3e} at t={t0}, {:.3e} at t={t1}; ratio over step ratio", e[w], e[w + 1]),
                scaled,
                Some(0.5),
                Some(2.0),
            ));
        }
    }
    Ok(out)
}

/// The whole suite with sizes from `[check]` and oracle settings from `[oracle]`.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<Vec<CheckOutcome>> {
    let c = &cfg.check;
    let opts = OracleOptions {
        n_oracle: c.n_oracle,
        ..cfg.oracle.options()
    };
    let mut out = Vec::new();
    for name in REPRESENTATION_PRESETS {
        let dgp = default_preset(name);
        for policy in representation_policies(&dgp)? {
            out.extend(representation_suite(&dgp, &policy, &opts, c.n_se)?);
        }
    }
    out.extend(uqr_suite(c.n_uqr, &opts, c.n_se)?);
    out.extend(single_equation_suite(c.n_sample, &opts)?);
    out.extend(control_variable_suite(c.n_sample, &opts)?);
    out.extend(orthogonality_suite());
    out.extend(riesz_suite(c.n_sample, cfg.oracle.seed.wrapping_add(4))?);
    out.extend(hadamard_suite()?);
    if out.is_empty() {
        return Err(MpeError::estimation("check suite produced no checks"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_score_is_second_order() {
        let (orth, plug) = orthogonality_slopes();
        assert!(orth >= 1.95 && orth <= 2.05, "{orth}");
        assert!((plug - 1.0).abs() < 0.05, "{plug}");
    }

    #[test]
    fn log_log_slope_of_power_law() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn hadamard_quantile_error_is_the_step() {
        let e = hadamard_fd_errors(&FunctionalSpec::Quantile { tau: 0.5 }).unwrap();
        for (err, t) in e.iter().zip(HADAMARD_STEPS) {
            assert!((err - t).abs() < 0.05 * t, "{err} vs {t}");
        }
    }

    #[test]
    fn riesz_identity_holds_in_sample() {
        for (name, err) in riesz_errors(10_000, 9).unwrap() {
            assert!(err < 0.05, "{name}: {err}");
        }
    }

    #[test]
    fn outcome_bounds() {
        assert!(CheckOutcome::at_most("g", "x", 1.0, 1.0).passed);
        assert!(!CheckOutcome::at_least("g", "x", f64::NAN, 0.0).passed);
        assert!(!CheckOutcome::new("g", "x", 3.0, Some(0.5), Some(2.0)).passed);
    }
}
