//! Structural designs `Y = m(D, X, ε)` with known ingredients, and the
//! brute-force oracles built on them.
//!
//! Oracles see the latent disturbances; estimators only ever receive a
//! [`Dataset`], which has no latent columns.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::distkit::{EmpiricalDistribution, KernelSpec, TauGrid};
use crate::error::{MpeError, Result};
use crate::estimators::Dataset;
use crate::functionals::{hadamard_on_grid, DensityProfile, FunctionalSpec};
use crate::policy::PolicySpec;
use crate::rng::{master_rng, replication_rng};
use crate::smoothing::OutcomeSmoother;

/// `(d, x, e) ↦ value`.
pub type StructuralFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
/// Draws the covariate row into the buffer.
pub type CovariateSampler = Arc<dyn Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync>;
/// Draws `D` given `X`.
pub type TreatmentSampler = Arc<dyn Fn(&mut dyn RngCore, &[f64]) -> f64 + Send + Sync>;
/// Draws `ε` given `(D, X)` and, under selection, the first-stage error `η`.
pub type DisturbanceSampler = Arc<dyn Fn(&mut dyn RngCore, f64, &[f64], Option<f64>) -> f64 + Send + Sync>;
/// Draws a scalar.
pub type ScalarSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Selection equation `D = h(Z, X, η)`.
#[derive(Clone)]
pub struct Selection {
    pub h: StructuralFn,
    pub law_z: ScalarSampler,
    pub law_eta: ScalarSampler,
}

#[derive(Clone)]
pub enum Treatment {
    Exogenous(TreatmentSampler),
    Selection(Selection),
}

/// Structural design with closed-form derivative and disturbance score.
#[derive(Clone)]
pub struct StructuralDgp {
    name: String,
    k: usize,
    m: StructuralFn,
    dm_dd: StructuralFn,
    law_x: CovariateSampler,
    treatment: Treatment,
    law_eps: DisturbanceSampler,
    /// `∂_d ln f_{ε|D,X}(e | d, x)`.
    dlogf: Option<StructuralFn>,
    mean_d: Option<f64>,
}

impl fmt::Debug for StructuralDgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructuralDgp")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("selection", &self.has_selection())
            .field("mean_d", &self.mean_d)
            .finish()
    }
}

/// Builder arguments for [`StructuralDgp::new`].
pub struct DgpParts {
    pub name: String,
    pub k: usize,
    pub m: StructuralFn,
    pub dm_dd: StructuralFn,
    pub law_x: CovariateSampler,
    pub treatment: Treatment,
    pub law_eps: DisturbanceSampler,
    pub dlogf: Option<StructuralFn>,
    pub mean_d: Option<f64>,
}

const SELF_CHECK_PROBES: usize = 64;
const SELF_CHECK_TOL: f64 = 1e-6;

impl StructuralDgp {
    /// Assemble a design; `dm_dd` is checked against a central difference of
    /// `m` at simulated probe points.
    pub fn new(parts: DgpParts) -> Result<Self> {
        let dgp = StructuralDgp {
            name: parts.name,
            k: parts.k,
            m: parts.m,
            dm_dd: parts.dm_dd,
            law_x: parts.law_x,
            treatment: parts.treatment,
            law_eps: parts.law_eps,
            dlogf: parts.dlogf,
            mean_d: parts.mean_d,
        };
        let probe = dgp.simulate_rng(SELF_CHECK_PROBES, &mut master_rng(0x5e1f))?;
        let step = 1e-5;
        let mut row = vec![0.0; dgp.k];
        for i in 0..SELF_CHECK_PROBES {
            probe.row_x(i, &mut row);
            let (d, e) = (probe.d[i], probe.e[i]);
            let fd = ((dgp.m)(d + step, &row, e) - (dgp.m)(d - step, &row, e)) / (2.0 * step);
            let exact = (dgp.dm_dd)(d, &row, e);
            if !((fd - exact).abs() <= SELF_CHECK_TOL * (1.0 + exact.abs())) {
                return Err(MpeError::config(format!(
                    "dgp `{}`: dm_dd = {exact} disagrees with the central difference {fd} at d = {d}",
                    dgp.name
                )));
            }
        }
        Ok(dgp)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn covariate_dim(&self) -> usize {
        self.k
    }

    pub fn has_selection(&self) -> bool {
        matches!(self.treatment, Treatment::Selection(_))
    }

    pub fn has_exogenous_d(&self) -> bool {
        matches!(self.treatment, Treatment::Exogenous(_))
    }

    pub fn has_log_density_derivative(&self) -> bool {
        self.dlogf.is_some()
    }

    /// Known `E[D]`, used by mean-preserving policies.
    pub fn mean_d(&self) -> Option<f64> {
        self.mean_d
    }

    pub fn m(&self, d: f64, x: &[f64], e: f64) -> f64 {
        (self.m)(d, x, e)
    }

    pub fn dm_dd(&self, d: f64, x: &[f64], e: f64) -> f64 {
        (self.dm_dd)(d, x, e)
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<DgpSample> {
        self.simulate_rng(n, &mut master_rng(seed))
    }

    pub fn simulate_rng(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<DgpSample> {
        if n < 2 {
            return Err(MpeError::config("simulation needs n ≥ 2"));
        }
        let mut row = vec![0.0; self.k];
        let mut x = vec![Vec::with_capacity(n); self.k];
        let (mut y, mut d, mut e) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let selection = self.has_selection();
        let mut z = selection.then(|| Vec::with_capacity(n));
        let mut eta = selection.then(|| Vec::with_capacity(n));
        for _ in 0..n {
            (self.law_x)(rng, &mut row);
            let (di, eta_i) = match &self.treatment {
                Treatment::Exogenous(law_d) => (law_d(rng, &row), None),
                Treatment::Selection(sel) => {
                    let zi = (sel.law_z)(rng);
                    let ei = (sel.law_eta)(rng);
                    z.as_mut().unwrap().push(zi);
                    eta.as_mut().unwrap().push(ei);
                    ((sel.h)(zi, &row, ei), Some(ei))
                }
            };
            let ei = (self.law_eps)(rng, di, &row, eta_i);
            let yi = (self.m)(di, &row, ei);
            if !(yi.is_finite() && di.is_finite()) {
                return Err(MpeError::config(format!("dgp `{}` produced a non-finite draw", self.name)));
            }
            for (col, v) in x.iter_mut().zip(&row) {
                col.push(*v);
            }
            y.push(yi);
            d.push(di);
            e.push(ei);
        }
        Ok(DgpSample { y, d, x, z, e, eta })
    }

    /// `Y^t_i = m(π_t(D_i), X_i, ε_i)` on the sample's own draws.
    pub fn simulate_counterfactual(&self, sample: &DgpSample, policy: &PolicySpec, t: f64) -> Result<Vec<f64>> {
        let mut row = vec![0.0; self.k];
        (0..sample.len())
            .map(|i| {
                sample.row_x(i, &mut row);
                let dt = policy.apply(sample.d[i], t)?;
                Ok((self.m)(dt, &row, sample.e[i]))
            })
            .collect()
    }

    /// `π̇(D_i)·∂_d m(D_i, X_i, ε_i)` for every observation.
    fn structural_effects(&self, sample: &DgpSample, policy: &PolicySpec) -> Result<Vec<f64>> {
        let mut row = vec![0.0; self.k];
        (0..sample.len())
            .map(|i| {
                sample.row_x(i, &mut row);
                let d = sample.d[i];
                Ok(policy.pi_dot(d)? * (self.dm_dd)(d, &row, sample.e[i]))
            })
            .collect()
    }
}

/// Simulated draw including latent columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSample {
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    /// Covariate columns.
    pub x: Vec<Vec<f64>>,
    pub z: Option<Vec<f64>>,
    /// Latent outcome disturbance (oracle only).
    pub e: Vec<f64>,
    /// Latent selection disturbance (oracle only).
    pub eta: Option<Vec<f64>>,
}

impl DgpSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row_x(&self, i: usize, out: &mut [f64]) {
        for (o, col) in out.iter_mut().zip(&self.x) {
            *o = col[i];
        }
    }

    /// Observable columns only.
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.y.clone(), self.d.clone(), self.x.clone(), self.z.clone())
    }
}

/// Finite-difference scheme for the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceScheme {
    /// `(Γ(F_t) − Γ(F_0))/t`.
    Forward,
    /// `2·D(t/2) − D(t)` on forward differences `D`; cancels the O(t) term.
    #[default]
    Richardson,
}

/// Oracle settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub t_step: f64,
    pub n_oracle: usize,
    pub seed: u64,
    pub scheme: DifferenceScheme,
    pub cond_kernel: KernelSpec,
    /// Independent replications at `n_oracle / se_replications` used for the
    /// Monte Carlo standard error.
    pub se_replications: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            t_step: 0.01,
            n_oracle: 1_000_000,
            seed: 20_240_601,
            scheme: DifferenceScheme::Richardson,
            cond_kernel: KernelSpec::gaussian(),
            se_replications: 10,
        }
    }
}

impl OracleOptions {
    fn validate(&self) -> Result<()> {
        if !(self.t_step > 0.0 && self.t_step <= 0.05) {
            return Err(MpeError::config(format!("t_step {} outside (0, 0.05]", self.t_step)));
        }
        if self.n_oracle < 2 {
            return Err(MpeError::config("n_oracle must be at least 2"));
        }
        Ok(())
    }
}

/// Outcome laws at `t = 0` and along the difference steps, sharing draws.
#[derive(Debug, Clone)]
pub struct OracleBundle {
    base: EmpiricalDistribution,
    steps: Vec<(f64, EmpiricalDistribution)>,
    scheme: DifferenceScheme,
}

impl OracleBundle {
    pub fn new(dgp: &StructuralDgp, policy: &PolicySpec, opts: &OracleOptions) -> Result<Self> {
        opts.validate()?;
        let sample = dgp.simulate(opts.n_oracle, opts.seed)?;
        Self::from_sample(dgp, &sample, policy, opts.t_step, opts.scheme)
    }

    pub fn from_sample(
        dgp: &StructuralDgp,
        sample: &DgpSample,
        policy: &PolicySpec,
        t_step: f64,
        scheme: DifferenceScheme,
    ) -> Result<Self> {
        let ts: Vec<f64> = match scheme {
            DifferenceScheme::Forward => vec![t_step],
            DifferenceScheme::Richardson => vec![t_step, 0.5 * t_step],
        };
        let steps = ts
            .into_iter()
            .map(|t| Ok((t, EmpiricalDistribution::new(dgp.simulate_counterfactual(sample, policy, t)?)?)))
            .collect::<Result<_>>()?;
        Ok(OracleBundle {
            base: EmpiricalDistribution::from_slice(&sample.y)?,
            steps,
            scheme,
        })
    }

    pub fn base(&self) -> &EmpiricalDistribution {
        &self.base
    }

    /// Forward difference quotient at the `j`-th step.
    fn forward(&self, functional: &FunctionalSpec, g0: f64, j: usize) -> Result<f64> {
        let (t, dist) = &self.steps[j];
        Ok((functional.eval(dist)? - g0) / t)
    }

    pub fn mpe(&self, functional: &FunctionalSpec) -> Result<f64> {
        let g0 = functional.eval(&self.base)?;
        match self.scheme {
            DifferenceScheme::Forward => self.forward(functional, g0, 0),
            DifferenceScheme::Richardson => {
                Ok(2.0 * self.forward(functional, g0, 1)? - self.forward(functional, g0, 0)?)
            }
        }
    }

    /// Plain forward difference at the first step, whatever the scheme.
    pub fn forward_mpe(&self, functional: &FunctionalSpec) -> Result<f64> {
        let g0 = functional.eval(&self.base)?;
        self.forward(functional, g0, 0)
    }
}

/// Ground-truth MPE by finite differences with common random numbers.
pub fn oracle_mpe(
    dgp: &StructuralDgp,
    policy: &PolicySpec,
    functional: &FunctionalSpec,
    t_step: f64,
    n_oracle: usize,
    seed: u64,
) -> Result<f64> {
    let opts = OracleOptions {
        t_step,
        n_oracle,
        seed,
        ..OracleOptions::default()
    };
    OracleBundle::new(dgp, policy, &opts)?.mpe(functional)
}

/// Structural side of the representation: the functional's derivative
/// applied to `−f̂_Y(y)·Ê[π̇(D)·∂_d m | Y = y]`.
#[derive(Debug, Clone)]
pub struct StructuralSide {
    y: EmpiricalDistribution,
    smoother: OutcomeSmoother,
    mean_effect: f64,
    kde: KernelSpec,
    grid: TauGrid,
}

impl StructuralSide {
    pub fn new(dgp: &StructuralDgp, policy: &PolicySpec, opts: &OracleOptions) -> Result<Self> {
        let sample = dgp.simulate(opts.n_oracle, opts.seed)?;
        Self::from_sample(dgp, &sample, policy, &opts.cond_kernel)
    }

    pub fn from_sample(dgp: &StructuralDgp, sample: &DgpSample, policy: &PolicySpec, cond_kernel: &KernelSpec) -> Result<Self> {
        let y = EmpiricalDistribution::from_slice(&sample.y)?;
        let h = cond_kernel.resolve(&y)?;
        let g = dgp.structural_effects(sample, policy)?;
        let smoother = OutcomeSmoother::new(&sample.y, &g, h)?;
        let mean_effect = g.iter().sum::<f64>() / g.len() as f64;
        Ok(StructuralSide {
            y,
            smoother,
            mean_effect,
            kde: KernelSpec::fixed(crate::distkit::Kernel::Gaussian, h),
            grid: TauGrid::default(),
        })
    }

    pub fn outcome(&self) -> &EmpiricalDistribution {
        &self.y
    }

    /// `Ê[π̇(D)·∂_d m | Y = y]`.
    pub fn conditional_effect(&self, y: f64) -> f64 {
        self.smoother.eval(y).conditional_mean
    }

    /// `−f̂_Y(y)·Ê[π̇(D)·∂_d m | Y = y]`.
    pub fn direction(&self, y: f64) -> f64 {
        let m = self.smoother.eval(y);
        if m.density > 0.0 {
            -m.density * m.conditional_mean
        } else {
            0.0
        }
    }

    /// The mean uses `−∫ h(y) dy`, which for the Nadaraya–Watson direction is
    /// exactly the sample mean of `π̇(D)·∂_d m` with no τ-grid truncation.
    pub fn mpe(&self, functional: &FunctionalSpec) -> Result<f64> {
        if let FunctionalSpec::Mean = functional {
            return Ok(self.mean_effect);
        }
        let profile = DensityProfile::new(&self.y, &self.kde, &self.grid)?;
        let on_grid: Vec<f64> = profile.quantiles().iter().map(|q| self.direction(*q)).collect();
        hadamard_on_grid(functional, &profile, &on_grid, |y| self.direction(y))
    }
}

pub fn oracle_structural_side(
    dgp: &StructuralDgp,
    policy: &PolicySpec,
    functional: &FunctionalSpec,
    n_oracle: usize,
    seed: u64,
    cond_kernel: &KernelSpec,
) -> Result<f64> {
    let opts = OracleOptions {
        n_oracle,
        seed,
        cond_kernel: *cond_kernel,
        ..OracleOptions::default()
    };
    StructuralSide::new(dgp, policy, &opts)?.mpe(functional)
}

/// Split of the UQR estimand into the local average structural derivative
/// at `q_τ` and the endogeneity bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UqrDecomposition {
    pub tau: f64,
    pub quantile: f64,
    pub lasd_term: f64,
    pub bias_term: f64,
    pub beta_uqr: f64,
}

pub fn oracle_uqr_decomposition(
    dgp: &StructuralDgp,
    tau: f64,
    n_oracle: usize,
    seed: u64,
    cond_kernel: &KernelSpec,
) -> Result<UqrDecomposition> {
    let sample = dgp.simulate(n_oracle, seed)?;
    uqr_decomposition_from_sample(dgp, &sample, tau, cond_kernel)
}

pub fn uqr_decomposition_from_sample(
    dgp: &StructuralDgp,
    sample: &DgpSample,
    tau: f64,
    cond_kernel: &KernelSpec,
) -> Result<UqrDecomposition> {
    let dlogf = dgp.dlogf.as_ref().ok_or_else(|| {
        MpeError::config(format!("dgp `{}` has no closed-form disturbance score", dgp.name))
    })?;
    let y = EmpiricalDistribution::from_slice(&sample.y)?;
    let q = y.quantile(tau)?;
    let h = cond_kernel.resolve(&y)?;
    let mut row = vec![0.0; dgp.k];
    let mut dm = Vec::with_capacity(sample.len());
    let mut score_sum = 0.0;
    for i in 0..sample.len() {
        sample.row_x(i, &mut row);
        let (d, e) = (sample.d[i], sample.e[i]);
        dm.push((dgp.dm_dd)(d, &row, e));
        if sample.y[i] <= q {
            score_sum += dlogf(d, &row, e);
        }
    }
    let at_q = OutcomeSmoother::new(&sample.y, &dm, h)?.eval(q);
    if !(at_q.density > 0.0) {
        return Err(MpeError::trimmed("zero outcome density at the quantile", 1));
    }
    let lasd_term = at_q.conditional_mean;
    let bias_term = score_sum / sample.len() as f64 / at_q.density;
    Ok(UqrDecomposition {
        tau,
        quantile: q,
        lasd_term,
        bias_term,
        beta_uqr: lasd_term - bias_term,
    })
}

/// Point value with a Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub se: f64,
}

/// Standard deviation of replicate values divided by `√R`.
pub fn replicate_se(values: &[f64]) -> f64 {
    let r = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (var / r).sqrt()
}

/// Lower bound on the combined standard error of two oracle values.
pub const COMBINED_SE_FLOOR: f64 = 1e-8;

pub fn combined_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt().max(COMBINED_SE_FLOOR)
}

/// One row of a representation check: the finite-difference oracle next to
/// the structural side, each with its Monte Carlo error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub functional: FunctionalSpec,
    pub oracle: OracleValue,
    pub structural: OracleValue,
    pub combined_se: f64,
    /// `|oracle − structural| / combined_se`.
    pub z: f64,
}

impl IdentityCheck {
    pub fn new(functional: FunctionalSpec, oracle: OracleValue, structural: OracleValue) -> Self {
        let combined = combined_se(oracle.se, structural.se);
        IdentityCheck {
            functional,
            oracle,
            structural,
            combined_se: combined,
            z: (oracle.value - structural.value).abs() / combined,
        }
    }

    pub fn passes(&self, n_se: f64) -> bool {
        self.z <= n_se
    }
}

/// Compare the finite-difference oracle with the structural side for several
/// functionals on shared draws.
pub fn representation_checks(
    dgp: &StructuralDgp,
    policy: &PolicySpec,
    functionals: &[FunctionalSpec],
    opts: &OracleOptions,
) -> Result<Vec<IdentityCheck>> {
    opts.validate()?;
    let pairs = paired_with_replicate_se(dgp, opts, |sample| {
        let bundle = OracleBundle::from_sample(dgp, sample, policy, opts.t_step, opts.scheme)?;
        let side = StructuralSide::from_sample(dgp, sample, policy, &opts.cond_kernel)?;
        functionals
            .iter()
            .map(|f| Ok((bundle.mpe(f)?, side.mpe(f)?)))
            .collect()
    })?;
    Ok(functionals
        .iter()
        .zip(pairs)
        .map(|(f, (oracle, structural))| IdentityCheck::new(*f, oracle, structural))
        .collect())
}

/// Run `f` on the main oracle sample and on `se_replications` samples of size
/// `n_oracle / se_replications`, returning each pair of main values with its
/// replicate standard errors.
pub fn paired_with_replicate_se(
    dgp: &StructuralDgp,
    opts: &OracleOptions,
    f: impl Fn(&DgpSample) -> Result<Vec<(f64, f64)>>,
) -> Result<Vec<(OracleValue, OracleValue)>> {
    let main = f(&dgp.simulate(opts.n_oracle, opts.seed)?)?;
    let reps = opts.se_replications.max(2);
    let n_rep = (opts.n_oracle / reps).max(2);
    let mut rep_a = vec![Vec::with_capacity(reps); main.len()];
    let mut rep_b = vec![Vec::with_capacity(reps); main.len()];
    for r in 0..reps {
        let sample = dgp.simulate_rng(n_rep, &mut replication_rng(opts.seed, r as u64 + 1))?;
        for (j, (a, b)) in f(&sample)?.into_iter().enumerate() {
            rep_a[j].push(a);
            rep_b[j].push(b);
        }
    }
    Ok(main
        .into_iter()
        .enumerate()
        .map(|(j, (a, b))| {
            (
                OracleValue { value: a, se: replicate_se(&rep_a[j]) },
                OracleValue { value: b, se: replicate_se(&rep_b[j]) },
            )
        })
        .collect())
}

/// Run `f` on the main oracle sample and on `se_replications` smaller ones,
/// returning the main value with its replicate standard error.
pub fn with_replicate_se(
    dgp: &StructuralDgp,
    opts: &OracleOptions,
    f: impl Fn(&DgpSample) -> Result<f64>,
) -> Result<OracleValue> {
    let value = f(&dgp.simulate(opts.n_oracle, opts.seed)?)?;
    let reps = opts.se_replications.max(2);
    let n_rep = (opts.n_oracle / reps).max(2);
    let values = (0..reps)
        .map(|r| f(&dgp.simulate_rng(n_rep, &mut replication_rng(opts.seed, r as u64 + 1))?))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleValue {
        value,
        se: replicate_se(&values),
    })
}

/// Registered design names.
pub const PRESETS: &[(&str, &str)] = &[
    ("linear_exogenous", "Y = intercept + beta·D + ε; D, ε independent N(0,1)"),
    ("random_coefficient", "Y = ε + (1 + gamma·ε)·D; D, ε independent N(0,1)"),
    ("quadratic_exogenous", "Y = D² + X + ε; D ~ N(1, 0.5²), X, ε ~ N(0,1)"),
    ("gaussian_endogenous", "Y = D + ε; D ~ N(0,1), ε | D ~ N(rho·D, 1 − rho²)"),
    ("triangular_normal", "D = Z + η, Y = D + ε, ε = rho·η + √(1 − rho²)·ν"),
    ("uniform_identity", "Y = D; D ~ U(lo, hi)"),
    ("uniform_quadratic", "Y = D²; D ~ U(lo, hi)"),
    ("null_effect", "Y = ε; D, ε independent N(0,1)"),
];

pub fn registry() -> Vec<StructuralDgp> {
    PRESETS
        .iter()
        .map(|(name, _)| preset(name, &BTreeMap::new()).expect("registered presets are valid"))
        .collect()
}

struct Overrides<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, f64>,
    allowed: &'static [&'static str],
}

impl Overrides<'_> {
    fn get(&self, key: &str, default: f64) -> f64 {
        self.map.get(key).copied().unwrap_or(default)
    }

    fn check(&self) -> Result<()> {
        for key in self.map.keys() {
            if !self.allowed.contains(&key.as_str()) {
                return Err(MpeError::config(format!(
                    "preset `{}` has no parameter `{key}` (allowed: {})",
                    self.name,
                    self.allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

fn std_normal() -> ScalarSampler {
    Arc::new(|rng: &mut dyn RngCore| StandardNormal.sample(rng))
}

fn no_covariates() -> CovariateSampler {
    Arc::new(|_: &mut dyn RngCore, _: &mut [f64]| {})
}

fn independent_eps(law: ScalarSampler) -> DisturbanceSampler {
    Arc::new(move |rng: &mut dyn RngCore, _, _, _| law(rng))
}

fn exogenous(law: ScalarSampler) -> Treatment {
    Treatment::Exogenous(Arc::new(move |rng: &mut dyn RngCore, _: &[f64]| law(rng)))
}

fn zero_score() -> Option<StructuralFn> {
    Some(Arc::new(|_, _, _| 0.0))
}

fn uniform_law(lo: f64, hi: f64) -> Result<ScalarSampler> {
    let u = Uniform::new(lo, hi).map_err(|e| MpeError::config(format!("uniform law: {e}")))?;
    Ok(Arc::new(move |rng: &mut dyn RngCore| rng.sample(u)))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(MpeError::config(format!("rho = {rho} must lie in (-1, 1)")));
    }
    Ok(())
}

/// Build a named design with parameter overrides.
pub fn preset(name: &str, overrides: &BTreeMap<String, f64>) -> Result<StructuralDgp> {
    let ov = |allowed| Overrides { name, map: overrides, allowed };
    let parts = match name {
        "linear_exogenous" => {
            let o = ov(&["beta", "intercept"]);
            o.check()?;
            let (b, a) = (o.get("beta", 1.0), o.get("intercept", 0.0));
            DgpParts {
                name: name.into(),
                k: 0,
                m: Arc::new(move |d, _, e| a + b * d + e),
                dm_dd: Arc::new(move |_, _, _| b),
                law_x: no_covariates(),
                treatment: exogenous(std_normal()),
                law_eps: independent_eps(std_normal()),
                dlogf: zero_score(),
                mean_d: Some(0.0),
            }
        }
        "random_coefficient" => {
            let o = ov(&["gamma"]);
            o.check()?;
            let g = o.get("gamma", 0.5);
            DgpParts {
                name: name.into(),
                k: 0,
                m: Arc::new(move |d, _, e| e + (1.0 + g * e) * d),
                dm_dd: Arc::new(move |_, _, e| 1.0 + g * e),
                law_x: no_covariates(),
                treatment: exogenous(std_normal()),
                law_eps: independent_eps(std_normal()),
                dlogf: zero_score(),
                mean_d: Some(0.0),
            }
        }
        "quadratic_exogenous" => {
            let o = ov(&["d_mean", "d_sd"]);
            o.check()?;
            let (mu, sd) = (o.get("d_mean", 1.0), o.get("d_sd", 0.5));
            let law = Normal::new(mu, sd).map_err(|e| MpeError::config(format!("normal law: {e}")))?;
            DgpParts {
                name: name.into(),
                k: 1,
                m: Arc::new(|d, x, e| d * d + x[0] + e),
                dm_dd: Arc::new(|d, _, _| 2.0 * d),
                law_x: Arc::new(|rng: &mut dyn RngCore, row: &mut [f64]| row[0] = StandardNormal.sample(rng)),
                treatment: exogenous(Arc::new(move |rng: &mut dyn RngCore| law.sample(rng))),
                law_eps: independent_eps(std_normal()),
                dlogf: zero_score(),
                mean_d: Some(mu),
            }
        }
        "gaussian_endogenous" => {
            let o = ov(&["rho"]);
            o.check()?;
            let rho = o.get("rho", 0.5);
            check_rho(rho)?;
            let s = (1.0 - rho * rho).sqrt();
            DgpParts {
                name: name.into(),
                k: 0,
                m: Arc::new(|d, _, e| d + e),
                dm_dd: Arc::new(|_, _, _| 1.0),
                law_x: no_covariates(),
                treatment: exogenous(std_normal()),
                law_eps: Arc::new(move |rng: &mut dyn RngCore, d, _, _| {
                    rho * d + s * { let v: f64 = StandardNormal.sample(rng); v }
                }),
                dlogf: Some(Arc::new(move |d, _, e| rho * (e - rho * d) / (1.0 - rho * rho))),
                mean_d: Some(0.0),
            }
        }
        "triangular_normal" => {
            let o = ov(&["rho"]);
            o.check()?;
            let rho = o.get("rho", 0.5);
            check_rho(rho)?;
            let s = (1.0 - rho * rho).sqrt();
            // ε | D = d ~ N(ρd/2, 1 − ρ²/2) since Var D = 2 and Cov(D, ε) = ρ.
            let cond_var = 1.0 - 0.5 * rho * rho;
            DgpParts {
                name: name.into(),
                k: 0,
                m: Arc::new(|d, _, e| d + e),
                dm_dd: Arc::new(|_, _, _| 1.0),
                law_x: no_covariates(),
                treatment: Treatment::Selection(Selection {
                    h: Arc::new(|z, _, eta| z + eta),
                    law_z: std_normal(),
                    law_eta: std_normal(),
                }),
                law_eps: Arc::new(move |rng: &mut dyn RngCore, _, _, eta| {
                    rho * eta.unwrap_or(0.0) + s * { let v: f64 = StandardNormal.sample(rng); v }
                }),
                dlogf: Some(Arc::new(move |d, _, e| (e - 0.5 * rho * d) * 0.5 * rho / cond_var)),
                mean_d: Some(0.0),
            }
        }
        "uniform_identity" | "uniform_quadratic" => {
            let o = ov(&["lo", "hi"]);
            o.check()?;
            let (lo, hi) = (o.get("lo", 1.0), o.get("hi", 2.0));
            let quadratic = name == "uniform_quadratic";
            DgpParts {
                name: name.into(),
                k: 0,
                m: if quadratic { Arc::new(|d, _, _| d * d) } else { Arc::new(|d, _, _| d) },
                dm_dd: if quadratic { Arc::new(|d, _, _| 2.0 * d) } else { Arc::new(|_, _, _| 1.0) },
                law_x: no_covariates(),
                treatment: exogenous(uniform_law(lo, hi)?),
                law_eps: Arc::new(|_: &mut dyn RngCore, _, _, _| 0.0),
                dlogf: zero_score(),
                mean_d: Some(0.5 * (lo + hi)),
            }
        }
        "null_effect" => {
            ov(&[]).check()?;
            DgpParts {
                name: name.into(),
                k: 0,
                m: Arc::new(|_, _, e| e),
                dm_dd: Arc::new(|_, _, _| 0.0),
                law_x: no_covariates(),
                treatment: exogenous(std_normal()),
                law_eps: independent_eps(std_normal()),
                dlogf: zero_score(),
                mean_d: Some(0.0),
            }
        }
        other => return Err(MpeError::Lookup(other.to_string())),
    };
    StructuralDgp::new(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TargetDistribution;
    use approx::assert_abs_diff_eq;

    fn get(name: &str) -> StructuralDgp {
        preset(name, &BTreeMap::new()).unwrap()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn registry_presets_are_valid() {
        let all = registry();
        assert_eq!(all.len(), PRESETS.len());
        let tri = get("triangular_normal");
        assert!(tri.has_selection() && !tri.has_exogenous_d());
        assert!(get("linear_exogenous").has_exogenous_d());
        assert!(matches!(preset("nope", &BTreeMap::new()), Err(MpeError::Lookup(_))));
        let bad = BTreeMap::from([("sigma".to_string(), 1.0)]);
        assert!(matches!(preset("linear_exogenous", &bad), Err(MpeError::Config(_))));
    }

    #[test]
    fn self_check_rejects_wrong_derivative() {
        let parts = DgpParts {
            name: "broken".into(),
            k: 0,
            m: Arc::new(|d, _, e| d * d + e),
            dm_dd: Arc::new(|_, _, _| 1.0),
            law_x: no_covariates(),
            treatment: exogenous(std_normal()),
            law_eps: independent_eps(std_normal()),
            dlogf: None,
            mean_d: None,
        };
        assert!(matches!(StructuralDgp::new(parts), Err(MpeError::Config(_))));
    }

    #[test]
    fn simulate_examples() {
        let lin = get("linear_exogenous");
        let s = lin.simulate(4, 3).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(s.y[i], s.d[i] + s.e[i], epsilon = 1e-12);
        }
        assert_eq!(lin.simulate(100, 9).unwrap(), lin.simulate(100, 9).unwrap());
        let tri = get("triangular_normal").simulate(10_000, 4).unwrap();
        assert_abs_diff_eq!(correlation(&tri.d, tri.z.as_ref().unwrap()), 0.5f64.sqrt(), epsilon = 0.03);
        assert!(tri.to_dataset().unwrap().z().is_some());
    }

    #[test]
    fn counterfactual_examples() {
        let lin = get("linear_exogenous");
        let s = lin.simulate(50, 5).unwrap();
        assert_eq!(lin.simulate_counterfactual(&s, &PolicySpec::LocationShift, 0.0).unwrap(), s.y);
        let ident = get("uniform_identity");
        let s = ident.simulate(50, 6).unwrap();
        let yt = ident.simulate_counterfactual(&s, &PolicySpec::LocationShift, 0.1).unwrap();
        for (a, b) in yt.iter().zip(&s.y) {
            assert_abs_diff_eq!(*a, b + 0.1, epsilon = 1e-12);
        }
        let quad = get("uniform_quadratic");
        let mut s = quad.simulate(2, 7).unwrap();
        s.d[0] = 1.0;
        let mp = PolicySpec::mean_preserving(1.0, 0.0).unwrap();
        let yt = quad.simulate_counterfactual(&s, &mp, 0.1).unwrap();
        assert_abs_diff_eq!(yt[0], 1.21, epsilon = 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let lin = get("linear_exogenous");
        for f in [FunctionalSpec::Quantile { tau: 0.3 }, FunctionalSpec::Mean] {
            let v = oracle_mpe(&lin, &PolicySpec::LocationShift, &f, 0.01, 200_000, 1).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 0.02);
        }
        let uni = get("uniform_identity");
        let v = oracle_mpe(&uni, &PolicySpec::LocationShift, &FunctionalSpec::Gini, 0.01, 200_000, 2).unwrap();
        assert_abs_diff_eq!(v, -2.0 / 27.0, epsilon = 0.005);
    }

    #[test]
    fn structural_side_examples() {
        let kde = KernelSpec::gaussian();
        let lin = get("linear_exogenous");
        let q = FunctionalSpec::Quantile { tau: 0.5 };
        let v = oracle_structural_side(&lin, &PolicySpec::LocationShift, &q, 100_000, 3, &kde).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 0.05);

        let rc = get("random_coefficient");
        let s = rc.simulate(100_000, 4).unwrap();
        let mean_beta = s.e.iter().map(|e| 1.0 + 0.5 * e).sum::<f64>() / s.len() as f64;
        let side = StructuralSide::from_sample(&rc, &s, &PolicySpec::LocationShift, &kde).unwrap();
        assert_abs_diff_eq!(side.mpe(&FunctionalSpec::Mean).unwrap(), mean_beta, epsilon = 0.03);

        let d = EmpiricalDistribution::from_slice(&s.d).unwrap();
        let null = PolicySpec::rank_preserving(d, kde, TargetDistribution::Base).unwrap();
        let side = StructuralSide::from_sample(&rc, &s, &null, &kde).unwrap();
        assert_eq!(side.mpe(&q).unwrap(), 0.0);
    }

    #[test]
    fn uqr_decomposition_examples() {
        let kde = KernelSpec::gaussian();
        let lin = oracle_uqr_decomposition(&get("linear_exogenous"), 0.5, 100_000, 5, &kde).unwrap();
        assert_eq!(lin.bias_term, 0.0);
        assert_abs_diff_eq!(lin.lasd_term, 1.0, epsilon = 0.05);
        let endo = oracle_uqr_decomposition(&get("gaussian_endogenous"), 0.5, 100_000, 6, &kde).unwrap();
        assert_abs_diff_eq!(endo.lasd_term, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(endo.bias_term, -0.5, epsilon = 0.05);
        assert_abs_diff_eq!(endo.beta_uqr, 1.5, epsilon = 0.05);
        let tri = oracle_uqr_decomposition(&get("triangular_normal"), 0.5, 100_000, 7, &kde).unwrap();
        assert_abs_diff_eq!(tri.beta_uqr, 1.25, epsilon = 0.05);
    }

    #[test]
    fn richardson_path_smoothness() {
        let quad = get("quadratic_exogenous");
        let s = quad.simulate(200_000, 8).unwrap();
        let f = FunctionalSpec::Mean;
        let mut gaps = Vec::new();
        for t in [0.04, 0.02, 0.01] {
            let fwd = |t| OracleBundle::from_sample(&quad, &s, &PolicySpec::LocationShift, t, DifferenceScheme::Forward)
                .unwrap()
                .mpe(&f)
                .unwrap();
            gaps.push((fwd(2.0 * t) - fwd(t)).abs());
        }
        assert!(gaps.windows(2).all(|w| w[1] <= 1.5 * w[0]));
        assert!(gaps[2] < gaps[0]);
    }

    #[test]
    fn replicate_se_matches_formula() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(replicate_se(&v), (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-12);
        assert_eq!(combined_se(0.0, 0.0), COMBINED_SE_FLOOR);
    }
}
