//! Distributional functionals and their Hadamard derivatives.
//!
//! A derivative is applied to a direction `h`, a perturbation of the outcome
//! CDF. Quantile-type derivatives only ever look at `h(q̂_τ) / f̂_Y(q̂_τ)`, so
//! directions live on the quantiles of a shared [`TauGrid`] and the density
//! is evaluated there once, in a [`DensityProfile`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distkit::{EmpiricalDistribution, Kernel, KernelSpec, TauGrid};
use crate::error::{MpeError, Result};
use crate::policy::{split_descriptor, PolicySpec};

/// Absolute density floor for trimming.
pub const DENSITY_FLOOR_ABS: f64 = 1e-4;
/// Relative density floor, as a fraction of the largest density on the grid.
pub const DENSITY_FLOOR_REL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    /// The CDF value `F(y)`.
    IdAt { y: f64 },
    Quantile { tau: f64 },
    Mean,
    Gini,
}

impl FunctionalSpec {
    pub fn quantile(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(MpeError::domain(format!("quantile level {tau} outside (0,1)")));
        }
        Ok(FunctionalSpec::Quantile { tau })
    }

    pub fn id_at(y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(MpeError::domain("id_at needs a finite evaluation point"));
        }
        Ok(FunctionalSpec::IdAt { y })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionalSpec::IdAt { y } => FunctionalSpec::id_at(y).map(|_| ()),
            FunctionalSpec::Quantile { tau } => FunctionalSpec::quantile(tau).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// `Γ(F̂)`.
    pub fn eval(&self, dist: &EmpiricalDistribution) -> Result<f64> {
        match *self {
            FunctionalSpec::IdAt { y } => Ok(dist.ecdf(y)),
            FunctionalSpec::Quantile { tau } => dist.quantile(tau),
            FunctionalSpec::Mean => Ok(dist.mean()),
            FunctionalSpec::Gini => dist.gini(),
        }
    }

    /// Parse `id_at:y=…`, `quantile:tau=…`, `mean` or `gini`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, params) = split_descriptor(text)?;
        let get = |key: &str| {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| MpeError::config(format!("functional `{name}` needs `{key}`")))
        };
        match name.as_str() {
            "id_at" => FunctionalSpec::id_at(get("y")?),
            "quantile" => FunctionalSpec::quantile(get("tau")?),
            "mean" => Ok(FunctionalSpec::Mean),
            "gini" => Ok(FunctionalSpec::Gini),
            other => Err(MpeError::config(format!("unknown functional `{other}`"))),
        }
        .map_err(|e| match e {
            MpeError::Domain(m) => MpeError::config(m),
            other => other,
        })
    }
}

impl fmt::Display for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalSpec::IdAt { y } => write!(f, "id_at:y={y}"),
            FunctionalSpec::Quantile { tau } => write!(f, "quantile:tau={tau}"),
            FunctionalSpec::Mean => write!(f, "mean"),
            FunctionalSpec::Gini => write!(f, "gini"),
        }
    }
}

/// Direction `h` stored as values at increasing knots, linearly interpolated
/// and held constant beyond the end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl DirectionFunction {
    /// Knots must be nondecreasing; tied knots keep their first value.
    pub fn from_points(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(MpeError::config("direction needs matching, nonempty knots and values"));
        }
        if knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(MpeError::config("direction knots must be sorted"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MpeError::domain("direction values must be finite"));
        }
        let mut k = Vec::with_capacity(knots.len());
        let mut v = Vec::with_capacity(values.len());
        for (x, y) in knots.into_iter().zip(values) {
            if k.last() != Some(&x) {
                k.push(x);
                v.push(y);
            }
        }
        Ok(DirectionFunction { knots: k, values: v })
    }

    /// Sample `h` at the grid quantiles of the profile.
    pub fn from_fn(profile: &DensityProfile<'_>, h: impl Fn(f64) -> f64) -> Result<Self> {
        let knots = profile.quantiles.clone();
        let values = knots.iter().map(|q| h(*q)).collect();
        DirectionFunction::from_points(knots, values)
    }

    /// The built-in location direction `h = −c·f̂_Y`.
    pub fn scaled_density(profile: &DensityProfile<'_>, scale: f64) -> Result<Self> {
        let values = profile.densities.iter().map(|f| -scale * f).collect();
        DirectionFunction::from_points(profile.quantiles.clone(), values)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let k = &self.knots;
        if y <= k[0] {
            return self.values[0];
        }
        let last = k.len() - 1;
        if y >= k[last] {
            return self.values[last];
        }
        let j = k.partition_point(|v| *v <= y);
        let (x0, x1) = (k[j - 1], k[j]);
        let w = (y - x0) / (x1 - x0);
        self.values[j - 1] + w * (self.values[j] - self.values[j - 1])
    }

    /// `a·self + b·other` on shared knots.
    pub fn combine(&self, a: f64, other: &DirectionFunction, b: f64) -> Result<Self> {
        if self.knots != other.knots {
            return Err(MpeError::config("directions must share knots to be combined"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(DirectionFunction {
            knots: self.knots.clone(),
            values,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

/// Quantiles and kernel densities of a reference sample along a τ-grid, with
/// trimming of low-density grid points.
#[derive(Debug, Clone)]
pub struct DensityProfile<'a> {
    dist: &'a EmpiricalDistribution,
    kernel: Kernel,
    bandwidth: f64,
    grid: TauGrid,
    quantiles: Vec<f64>,
    densities: Vec<f64>,
    /// Trapezoid weights renormalized over kept points; zero where trimmed.
    weights: Vec<f64>,
    floor: f64,
    n_trimmed: usize,
}

impl<'a> DensityProfile<'a> {
    pub fn new(dist: &'a EmpiricalDistribution, kde: &KernelSpec, grid: &TauGrid) -> Result<Self> {
        let bandwidth = kde.resolve(dist)?;
        let quantiles: Vec<f64> = grid.points().iter().map(|t| dist.quantile_unchecked(*t)).collect();
        let densities: Vec<f64> = quantiles
            .iter()
            .map(|q| dist.kde_with(kde.kernel, bandwidth, *q))
            .collect();
        let fmax = densities.iter().copied().fold(0.0, f64::max);
        let floor = DENSITY_FLOOR_ABS.max(DENSITY_FLOOR_REL * fmax);
        let mut weights: Vec<f64> = grid
            .weights()
            .iter()
            .zip(&densities)
            .map(|(w, f)| if *f >= floor { *w } else { 0.0 })
            .collect();
        let n_trimmed = densities.iter().filter(|f| **f < floor).count();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(DensityProfile {
            dist,
            kernel: kde.kernel,
            bandwidth,
            grid: grid.clone(),
            quantiles,
            densities,
            weights,
            floor,
            n_trimmed,
        })
    }

    pub fn dist(&self) -> &EmpiricalDistribution {
        self.dist
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn grid(&self) -> &TauGrid {
        &self.grid
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn n_trimmed(&self) -> usize {
        self.n_trimmed
    }

    pub fn is_kept(&self, j: usize) -> bool {
        self.weights[j] > 0.0
    }

    pub fn density_at(&self, y: f64) -> f64 {
        self.dist.kde_with(self.kernel, self.bandwidth, y)
    }

    /// `(q̂_τ, f̂_Y(q̂_τ))`, or a trim signal when the density is below the floor.
    pub fn point(&self, tau: f64) -> Result<(f64, f64)> {
        let q = self.dist.quantile(tau)?;
        let f = self.density_at(q);
        if f < self.floor {
            return Err(MpeError::trimmed(
                format!("density {f:.3e} at the {tau} quantile is below the floor {:.3e}", self.floor),
                1,
            ));
        }
        Ok((q, f))
    }

    fn require_kept(&self) -> Result<()> {
        if self.weights.iter().all(|w| *w == 0.0) {
            return Err(MpeError::estimation("every grid point was density-trimmed"));
        }
        Ok(())
    }

    /// `Σ_j w_j · g(τ_j) · r_j` with `r_j = −h_j / f̂_j` over kept grid points.
    pub(crate) fn integrate_ratio(&self, h: &[f64], g: impl Fn(f64) -> f64) -> Result<f64> {
        self.require_kept()?;
        let mut acc = 0.0;
        for (j, tau) in self.grid.points().iter().enumerate() {
            let w = self.weights[j];
            if w > 0.0 {
                acc += w * g(*tau) * (-h[j] / self.densities[j]);
            }
        }
        Ok(acc)
    }
}

/// `Γ'_F(h)` against a freshly built density profile on the default grid.
pub fn hadamard_apply(
    spec: &FunctionalSpec,
    dist: &EmpiricalDistribution,
    kde: &KernelSpec,
    h: &DirectionFunction,
) -> Result<f64> {
    let profile = DensityProfile::new(dist, kde, &TauGrid::default())?;
    hadamard_apply_with(spec, &profile, h)
}

/// `Γ'_F(h)` against an existing profile.
pub fn hadamard_apply_with(
    spec: &FunctionalSpec,
    profile: &DensityProfile<'_>,
    h: &DirectionFunction,
) -> Result<f64> {
    let on_grid: Vec<f64> = profile.quantiles.iter().map(|q| h.eval(*q)).collect();
    hadamard_on_grid(spec, profile, &on_grid, |y| h.eval(y))
}

/// Same as [`hadamard_apply_with`] for a direction given by its values at the
/// profile's grid quantiles and, for point functionals, a pointwise evaluator.
pub(crate) fn hadamard_on_grid(
    spec: &FunctionalSpec,
    profile: &DensityProfile<'_>,
    on_grid: &[f64],
    pointwise: impl Fn(f64) -> f64,
) -> Result<f64> {
    match *spec {
        FunctionalSpec::IdAt { y } => Ok(pointwise(y)),
        FunctionalSpec::Quantile { tau } => {
            let (q, f) = profile.point(tau)?;
            Ok(-pointwise(q) / f)
        }
        FunctionalSpec::Mean => profile.integrate_ratio(on_grid, |_| 1.0),
        FunctionalSpec::Gini => {
            let dist = profile.dist;
            let mu = dist.mean();
            dist.gini()?;
            let phi = dist.phi_affine();
            Ok(2.0 / (mu * mu) * profile.integrate_ratio(on_grid, |t| phi.eval(t))?)
        }
    }
}

/// Structural weight `ω^f(y, d) = −f̂_Y(y)·π̇(d)`.
pub fn omega_f(
    dist: &EmpiricalDistribution,
    kde: &KernelSpec,
    policy: &PolicySpec,
    y: f64,
    d: f64,
) -> Result<f64> {
    let pd = policy.pi_dot(d)?;
    Ok(-dist.kde(kde, y)? * pd)
}

/// Gini weight `ω^GC(y, d) = 2·φ̂(F̂_Y(y))·π̇(d)/μ̂²`.
pub fn omega_gc(dist: &EmpiricalDistribution, policy: &PolicySpec, y: f64, d: f64) -> Result<f64> {
    let mu = dist.mean();
    if dist.min() < 0.0 || !(mu > 0.0) {
        return Err(MpeError::domain("Gini weight needs nonnegative outcomes with positive mean"));
    }
    let pd = policy.pi_dot(d)?;
    Ok(2.0 * dist.phi_affine().eval(dist.ecdf(y)) * pd / (mu * mu))
}
