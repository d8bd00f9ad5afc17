//! Empirical-distribution primitives.
//!
//! [`EmpiricalDistribution`] is the sample stand-in for an outcome law: it
//! answers CDF, left-continuous quantile, kernel density, Lorenz curve, Gini
//! and Gini-weight queries. Lorenz, Gini and the Gini weight are computed as
//! exact integrals of the step quantile function; the trimmed [`TauGrid`] is
//! reserved for integrals that divide by an estimated density.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};

/// Gaussian kernel mass beyond this many bandwidths is dropped when summing.
pub(crate) const GAUSS_CUTOFF: f64 = 7.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    #[inline]
    pub fn pdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Integrated kernel, `∫_{-∞}^u K`.
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => normal_cdf(u),
            Kernel::Epanechnikov => {
                if u <= -1.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    0.5 + 0.75 * u - 0.25 * u * u * u
                }
            }
        }
    }

    /// [`Self::cdf`] with the tabulated Gaussian CDF.
    #[inline]
    pub(crate) fn cdf_fast(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => normal_cdf_tabulated(u),
            Kernel::Epanechnikov => self.cdf(u),
        }
    }

    /// Half-width of the effective support in bandwidth units.
    pub fn support(self) -> f64 {
        match self {
            Kernel::Gaussian => GAUSS_CUTOFF,
            Kernel::Epanechnikov => 1.0,
        }
    }
}

pub(crate) fn normal_cdf(u: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-u / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

const TABLE_LIMIT: f64 = 8.0;
const TABLE_STEPS_PER_UNIT: f64 = 64.0;

static NORMAL_TABLE: LazyLock<Vec<(f64, f64)>> = LazyLock::new(|| {
    let size = (2.0 * TABLE_LIMIT * TABLE_STEPS_PER_UNIT) as usize + 2;
    (0..size)
        .map(|k| {
            let u = -TABLE_LIMIT + k as f64 / TABLE_STEPS_PER_UNIT;
            (normal_cdf(u), normal_pdf(u))
        })
        .collect()
});

/// `Φ(u)` by cubic Hermite interpolation of a table with step 1/64; absolute
/// error below 1e-9. For hot loops only.
#[inline]
pub(crate) fn normal_cdf_tabulated(u: f64) -> f64 {
    if u <= -TABLE_LIMIT {
        return 0.0;
    }
    if u >= TABLE_LIMIT {
        return 1.0;
    }
    let t = (u + TABLE_LIMIT) * TABLE_STEPS_PER_UNIT;
    let k = t as usize;
    let s = t - k as f64;
    let table = &*NORMAL_TABLE;
    let (c0, p0) = table[k];
    let (c1, p1) = table[k + 1];
    let step = 1.0 / TABLE_STEPS_PER_UNIT;
    let r = 1.0 - s;
    (1.0 + 2.0 * s) * r * r * c0 + s * r * r * step * p0 + s * s * (3.0 - 2.0 * s) * c1 - s * s * r * step * p1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `1.06 · min(sd, IQR/1.349) · n^(-1/5)`.
    #[default]
    Silverman,
    Fixed(f64),
}

/// Kernel family plus bandwidth (explicit or by rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        Self::default()
    }

    pub fn fixed(kernel: Kernel, h: f64) -> Self {
        KernelSpec {
            kernel,
            bandwidth: Bandwidth::Fixed(h),
        }
    }

    /// Resolve the bandwidth against a sample.
    pub fn resolve(&self, dist: &EmpiricalDistribution) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            Bandwidth::Fixed(h) => Err(MpeError::config(format!(
                "explicit bandwidth must be positive, got {h}"
            ))),
            Bandwidth::Silverman => silverman_bandwidth(dist, 5.0),
        }
    }

    pub fn resolved(&self, dist: &EmpiricalDistribution) -> Result<KernelSpec> {
        Ok(KernelSpec::fixed(self.kernel, self.resolve(dist)?))
    }
}

/// `1.06 · σ̂ · n^(-1/rate_denominator)` with `σ̂ = min(sd, IQR/1.349)`.
pub(crate) fn silverman_bandwidth(dist: &EmpiricalDistribution, rate_denominator: f64) -> Result<f64> {
    let scale = dist.robust_scale();
    if !(scale > 0.0) {
        return Err(MpeError::config(
            "zero sample dispersion: Silverman bandwidth is undefined",
        ));
    }
    Ok(1.06 * scale * dist.effective_size().powf(-1.0 / rate_denominator))
}

/// Sorted sample with optional normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    /// Cumulative weights aligned with `values`; `None` means uniform.
    cumulative: Option<Vec<f64>>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution {
            values,
            cumulative: None,
        })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    /// Weighted sample. Weights must be nonnegative and sum to one.
    pub fn with_weights(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        if weights.len() != values.len() {
            return Err(MpeError::config("weights and values differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(MpeError::config("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(MpeError::config(format!("weights sum to {total}, not 1")));
        }
        let mut pairs: Vec<(f64, f64)> = values.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(pairs.len());
        let values = pairs
            .into_iter()
            .map(|(v, w)| {
                acc += w;
                cumulative.push(acc);
                v
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(EmpiricalDistribution {
            values,
            cumulative: Some(cumulative),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_weighted(&self) -> bool {
        self.cumulative.is_some()
    }

    /// Weight of the `i`-th sorted value.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match &self.cumulative {
            None => 1.0 / self.values.len() as f64,
            Some(c) => {
                if i == 0 {
                    c[0]
                } else {
                    c[i] - c[i - 1]
                }
            }
        }
    }

    /// Cumulative weight of the first `k` sorted values.
    #[inline]
    fn cum_weight(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match &self.cumulative {
            None => k as f64 / self.values.len() as f64,
            Some(c) => c[k - 1],
        }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        match &self.cumulative {
            None => self.values.iter().sum::<f64>() / self.values.len() as f64,
            Some(_) => (0..self.len()).map(|i| self.weight(i) * self.values[i]).sum(),
        }
    }

    /// Standard deviation (n−1 denominator for unweighted samples).
    pub fn sd(&self) -> f64 {
        let mu = self.mean();
        match &self.cumulative {
            None => {
                let n = self.values.len() as f64;
                let ss: f64 = self.values.iter().map(|v| (v - mu).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            }
            Some(_) => (0..self.len())
                .map(|i| self.weight(i) * (self.values[i] - mu).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.quantile_unchecked(0.75) - self.quantile_unchecked(0.25)
    }

    /// `min(sd, IQR/1.349)`, falling back to the sd when the IQR vanishes.
    pub fn robust_scale(&self) -> f64 {
        let sd = self.sd();
        let iqr = self.iqr() / 1.349;
        if iqr > 0.0 {
            sd.min(iqr)
        } else {
            sd
        }
    }

    /// Kish effective sample size; equals `n` for uniform weights.
    pub fn effective_size(&self) -> f64 {
        match &self.cumulative {
            None => self.values.len() as f64,
            Some(_) => {
                let s2: f64 = (0..self.len()).map(|i| self.weight(i).powi(2)).sum();
                1.0 / s2
            }
        }
    }

    /// Right-continuous ECDF.
    pub fn ecdf(&self, y: f64) -> f64 {
        let k = self.values.partition_point(|v| *v <= y);
        self.cum_weight(k)
    }

    /// Left-continuous generalized inverse `inf{y : F(y) ≥ τ}`.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(MpeError::domain(format!("quantile level {tau} outside (0,1)")));
        }
        Ok(self.quantile_unchecked(tau))
    }

    /// Quantile for `τ ∈ [0,1]`; `τ = 0` maps to the minimum.
    pub(crate) fn quantile_unchecked(&self, tau: f64) -> f64 {
        let n = self.values.len();
        if tau <= 0.0 {
            return self.values[0];
        }
        let k = match &self.cumulative {
            None => {
                let nf = n as f64;
                let mut k = ((tau * nf).ceil() as usize).clamp(1, n);
                while k > 1 && self.cum_weight(k - 1) >= tau {
                    k -= 1;
                }
                while k < n && self.cum_weight(k) < tau {
                    k += 1;
                }
                k
            }
            Some(c) => (c.partition_point(|w| *w < tau - WEIGHT_TOL) + 1).min(n),
        };
        self.values[k - 1]
    }

    /// Kernel density estimate at `y`.
    pub fn kde(&self, spec: &KernelSpec, y: f64) -> Result<f64> {
        let h = spec.resolve(self)?;
        Ok(self.kde_with(spec.kernel, h, y))
    }

    /// Kernel density with an already resolved bandwidth.
    pub fn kde_with(&self, kernel: Kernel, h: f64, y: f64) -> f64 {
        let reach = kernel.support() * h;
        let lo = self.values.partition_point(|v| *v < y - reach);
        let hi = self.values.partition_point(|v| *v <= y + reach);
        let mut acc = 0.0;
        match &self.cumulative {
            None => {
                for v in &self.values[lo..hi] {
                    acc += kernel.pdf((y - v) / h);
                }
                acc / (self.values.len() as f64 * h)
            }
            Some(_) => {
                for i in lo..hi {
                    acc += self.weight(i) * kernel.pdf((y - self.values[i]) / h);
                }
                acc / h
            }
        }
    }

    /// Kernel-smoothed CDF `Σ w_j K̄((y − x_j)/h)`.
    pub fn smoothed_cdf(&self, kernel: Kernel, h: f64, y: f64) -> f64 {
        let reach = kernel.support() * h;
        let lo = self.values.partition_point(|v| *v < y - reach);
        let hi = self.values.partition_point(|v| *v <= y + reach);
        let mut acc = self.cum_weight(lo);
        for i in lo..hi {
            acc += self.weight(i) * kernel.cdf((y - self.values[i]) / h);
        }
        acc.clamp(0.0, 1.0)
    }

    fn require_nonnegative(&self) -> Result<f64> {
        if self.values[0] < 0.0 {
            return Err(MpeError::domain(
                "Lorenz/Gini functionals need nonnegative outcomes",
            ));
        }
        let mu = self.mean();
        if !(mu > 0.0) {
            return Err(MpeError::domain("Lorenz/Gini functionals need a positive mean"));
        }
        Ok(mu)
    }

    /// `∫_0^p Q_τ dτ` for the step quantile function.
    fn partial_quantile_integral(&self, p: f64) -> f64 {
        let n = self.values.len();
        let mut acc = 0.0;
        for k in 0..n {
            let lo = self.cum_weight(k);
            if lo >= p {
                break;
            }
            let hi = self.cum_weight(k + 1).min(p);
            acc += (hi - lo) * self.values[k];
        }
        acc
    }

    /// `∫_0^1 p·Q_p dp`, exact for the step quantile function.
    fn first_moment_of_quantile(&self) -> f64 {
        (0..self.values.len())
            .map(|k| {
                let lo = self.cum_weight(k);
                let hi = self.cum_weight(k + 1);
                0.5 * (hi * hi - lo * lo) * self.values[k]
            })
            .sum()
    }

    /// Lorenz curve `L_p = ∫_0^p Q_τ dτ / μ`.
    pub fn lorenz(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(MpeError::domain(format!("Lorenz ordinate {p} outside [0,1]")));
        }
        let mu = self.require_nonnegative()?;
        Ok((self.partial_quantile_integral(p) / mu).clamp(0.0, 1.0))
    }

    /// Gini coefficient `1 − 2∫_0^1 L_p dp`.
    pub fn gini(&self) -> Result<f64> {
        let mu = self.require_nonnegative()?;
        // ∫L = (μ − ∫τQ)/μ, so GC = 2∫τQ/μ − 1.
        Ok((2.0 * self.first_moment_of_quantile() / mu - 1.0).max(0.0))
    }

    /// Gini weight `φ(τ) = ∫_0^1 (τ − p) Q_p dp = τ·μ − ∫ p Q_p dp`.
    pub fn phi_weight(&self, tau: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(MpeError::domain(format!("Gini weight level {tau} outside [0,1]")));
        }
        Ok(self.phi_affine().eval(tau))
    }

    /// The affine map `τ ↦ φ(τ)`, computed once.
    pub(crate) fn phi_affine(&self) -> PhiWeight {
        PhiWeight {
            slope: self.mean(),
            offset: self.first_moment_of_quantile(),
        }
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(MpeError::config(format!(
            "an empirical distribution needs at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MpeError::config("empirical distribution values must be finite"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PhiWeight {
    slope: f64,
    offset: f64,
}

impl PhiWeight {
    #[inline]
    pub(crate) fn eval(&self, tau: f64) -> f64 {
        tau * self.slope - self.offset
    }
}

/// Equispaced grid on `[0.005, 0.995]` with trapezoid weights. The end
/// intervals `[0, lo]` and `[hi, 1]` take the value at the nearest grid point,
/// so the weights integrate over `[0, 1]` and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid::new(512, 0.005, 0.995)
    }
}

impl TauGrid {
    pub fn new(size: usize, lo: f64, hi: f64) -> Self {
        assert!(size >= 2 && 0.0 <= lo && lo < hi && hi <= 1.0, "degenerate tau grid");
        let step = (hi - lo) / (size - 1) as f64;
        let points: Vec<f64> = (0..size).map(|j| lo + step * j as f64).collect();
        let mut weights = vec![step; size];
        weights[0] = 0.5 * step + lo;
        weights[size - 1] = 0.5 * step + (1.0 - hi);
        TauGrid { points, weights }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn tabulated_normal_cdf_is_accurate() {
        let worst = (-90_000..=90_000)
            .map(|k| k as f64 * 1e-4)
            .map(|u| (normal_cdf_tabulated(u) - normal_cdf(u)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    fn d(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::from_slice(v).unwrap()
    }

    fn uniform_sample(n: usize, lo: f64, hi: f64, seed: u64) -> EmpiricalDistribution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmpiricalDistribution::new((0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
            .unwrap()
    }

    /// O(n²) pairwise mean absolute difference over twice the mean.
    fn brute_force_gini(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let mut acc = 0.0;
        for a in values {
            for b in values {
                acc += (a - b).abs();
            }
        }
        acc / (n * n) / (2.0 * mu)
    }

    #[test]
    fn ecdf_counts() {
        let dist = d(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(dist.ecdf(2.5), 0.5);
        assert_eq!(dist.ecdf(0.0), 0.0);
        assert_eq!(dist.ecdf(4.0), 1.0);
    }

    #[test]
    fn quantile_is_left_continuous_inverse() {
        let dist = d(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(dist.quantile(0.5).unwrap(), 2.0);
        assert_eq!(dist.quantile(0.51).unwrap(), 3.0);
        let padded = d(&[7.0, 7.0]);
        for tau in [0.01, 0.5, 0.99] {
            assert_eq!(padded.quantile(tau).unwrap(), 7.0);
        }
        assert!(dist.quantile(0.0).is_err());
        assert!(dist.quantile(1.0).is_err());
        assert!(EmpiricalDistribution::new(vec![7.0]).is_err());
    }

    #[test]
    fn weighted_quantile_and_ecdf() {
        let dist =
            EmpiricalDistribution::with_weights(vec![3.0, 1.0, 2.0], vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(dist.ecdf(1.0), 0.25);
        assert_eq!(dist.quantile(0.5).unwrap(), 2.0);
        assert_eq!(dist.quantile(0.51).unwrap(), 3.0);
        assert_abs_diff_eq!(dist.mean(), 2.25, epsilon = 1e-12);
        assert!(EmpiricalDistribution::with_weights(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn kde_matches_known_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = EmpiricalDistribution::new(
            (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        )
        .unwrap();
        let f0 = normal.kde(&KernelSpec::gaussian(), 0.0).unwrap();
        assert!((f0 - 0.3989).abs() < 0.02, "{f0}");

        let uni = uniform_sample(10_000, 0.0, 1.0, 12);
        let f = uni.kde(&KernelSpec::gaussian(), 0.5).unwrap();
        assert!((f - 1.0).abs() < 0.05, "{f}");

        let mass = d(&[2.0, 2.0, 2.0]);
        let f = mass.kde(&KernelSpec::fixed(Kernel::Gaussian, 1.0), 2.0).unwrap();
        assert_abs_diff_eq!(f, 0.398_942_280_401_432_7, epsilon = 1e-12);
        assert!(mass.kde(&KernelSpec::gaussian(), 2.0).is_err());
    }

    #[test]
    fn kde_integrates_to_one() {
        let dist = uniform_sample(400, 0.0, 3.0, 5);
        for spec in [
            KernelSpec::gaussian(),
            KernelSpec { kernel: Kernel::Epanechnikov, bandwidth: Bandwidth::Silverman },
        ] {
            let h = spec.resolve(&dist).unwrap();
            let (lo, hi) = (dist.min() - 6.0 * h, dist.max() + 6.0 * h);
            let m = 20_000;
            let step = (hi - lo) / m as f64;
            let total: f64 = (0..=m)
                .map(|j| {
                    let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                    w * dist.kde_with(spec.kernel, h, lo + step * j as f64)
                })
                .sum::<f64>()
                * step;
            assert!((total - 1.0).abs() < 1e-3, "{total}");
        }
    }

    #[test]
    fn lorenz_examples() {
        let equal = d(&[3.0; 6]);
        for p in [0.0, 0.2, 0.5, 1.0] {
            assert_abs_diff_eq!(equal.lorenz(p).unwrap(), p, epsilon = 1e-12);
        }
        let top = d(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(top.lorenz(0.75).unwrap(), 0.0);
        assert_eq!(top.lorenz(1.0).unwrap(), 1.0);
        let uni = uniform_sample(200_000, 0.0, 1.0, 3);
        assert!((uni.lorenz(0.5).unwrap() - 0.25).abs() < 0.01);
        assert!(d(&[-1.0, 2.0]).lorenz(0.5).is_err());
        assert!(d(&[0.0, 0.0]).lorenz(0.5).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_abs_diff_eq!(d(&[2.0; 5]).gini().unwrap(), 0.0, epsilon = 1e-12);
        let u01 = uniform_sample(200_000, 0.0, 1.0, 4);
        assert!((u01.gini().unwrap() - 1.0 / 3.0).abs() < 0.01);
        let u12 = uniform_sample(200_000, 1.0, 2.0, 5);
        assert!((u12.gini().unwrap() - 1.0 / 9.0).abs() < 0.005);
    }

    #[test]
    fn phi_weight_examples() {
        let c = 2.5;
        let equal = d(&[c; 8]);
        for tau in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(equal.phi_weight(tau).unwrap(), c * (tau - 0.5), epsilon = 1e-12);
        }
        let dist = d(&[0.3, 1.7, 4.0, 2.2]);
        let slope = dist.phi_weight(1.0).unwrap() - dist.phi_weight(0.0).unwrap();
        assert_abs_diff_eq!(slope, dist.mean(), epsilon = 1e-12);
        let uni = uniform_sample(200_000, 0.0, 1.0, 6);
        assert!((uni.phi_weight(0.5).unwrap() + 1.0 / 12.0).abs() < 0.005);
    }

    #[test]
    fn tau_grid_weights_sum_to_one() {
        let grid = TauGrid::default();
        assert_eq!(grid.len(), 512);
        assert_abs_diff_eq!(grid.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grid.points()[0], 0.005);
        assert_abs_diff_eq!(grid.points()[511], 0.995, epsilon = 1e-12);
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..50.0, 2..120)
    }

    proptest! {
        #[test]
        fn quantile_inverts_ecdf(values in sample_strategy(), tau in 0.001f64..0.999) {
            let dist = d(&values);
            let q = dist.quantile(tau).unwrap();
            prop_assert!(dist.ecdf(q) >= tau);
            let below = dist.values().iter().filter(|v| **v < q).last();
            if let Some(b) = below {
                prop_assert!(dist.ecdf(*b) < tau);
            }
        }

        #[test]
        fn gini_matches_pairwise_formula(values in prop::collection::vec(0.01f64..50.0, 2..500)) {
            let dist = d(&values);
            let expected = brute_force_gini(&values);
            prop_assert!((dist.gini().unwrap() - expected).abs() < 1e-6);
        }

        #[test]
        fn lorenz_is_monotone_convex(values in sample_strategy()) {
            let dist = d(&values);
            prop_assume!(dist.mean() > 0.0);
            let ps: Vec<f64> = (0..=100).map(|j| j as f64 / 100.0).collect();
            let l: Vec<f64> = ps.iter().map(|p| dist.lorenz(*p).unwrap()).collect();
            prop_assert!(l[0].abs() < 1e-12 && (l[100] - 1.0).abs() < 1e-12);
            for w in l.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
            for w in l.windows(3) {
                prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-10);
            }
        }

        #[test]
        fn phi_weight_is_affine_with_mean_slope(values in sample_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let dist = d(&values);
            prop_assume!((a - b).abs() > 1e-3);
            let slope = (dist.phi_weight(a).unwrap() - dist.phi_weight(b).unwrap()) / (a - b);
            prop_assert!((slope - dist.mean()).abs() < 1e-9 * (1.0 + dist.mean()));
        }
    }
}
