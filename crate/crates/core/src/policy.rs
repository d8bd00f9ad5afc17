//! Policy functions `π_t` and their pathwise derivatives `π̇(d) = ∂_t π_t(d)|_{t=0}`.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, Uniform};

use crate::distkit::{EmpiricalDistribution, Kernel, KernelSpec};
use crate::error::{MpeError, Result};

const INVERSION_TOL: f64 = 1e-10;

/// Counterfactual target law `G_D` of a rank-preserving perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TargetDistribution {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `G_D = F_D`: no perturbation at all.
    Base,
}

/// Rank-preserving transformation `π_t(d) = H_t^{-1}(F_D(d))` with
/// `H_t = F_D + t(G_D − F_D)`.
///
/// `F_D` is the kernel-smoothed CDF of the base sample, so that `H_t` is
/// continuous and `f_D = F_D'` is the matching kernel density.
#[derive(Debug, Clone)]
pub struct RankPreserving {
    base: EmpiricalDistribution,
    kernel: Kernel,
    bandwidth: f64,
    target: TargetDistribution,
    density_floor: f64,
    target_normal: Option<Normal>,
    target_uniform: Option<Uniform>,
}

impl RankPreserving {
    pub fn new(
        base: EmpiricalDistribution,
        density: KernelSpec,
        target: TargetDistribution,
    ) -> Result<Self> {
        let bandwidth = density.resolve(&base)?;
        let (target_normal, target_uniform) = match target {
            TargetDistribution::Normal { mean, sd } => (
                Some(Normal::new(mean, sd).map_err(|e| MpeError::config(e.to_string()))?),
                None,
            ),
            TargetDistribution::Uniform { lo, hi } => (
                None,
                Some(Uniform::new(lo, hi).map_err(|e| MpeError::config(e.to_string()))?),
            ),
            TargetDistribution::Base => (None, None),
        };
        let mut fitted: Vec<f64> = base
            .values()
            .iter()
            .map(|v| base.kde_with(density.kernel, bandwidth, *v))
            .collect();
        fitted.sort_by(f64::total_cmp);
        let density_floor = fitted[(fitted.len() / 100).min(fitted.len() - 1)];
        Ok(RankPreserving {
            base,
            kernel: density.kernel,
            bandwidth,
            target,
            density_floor,
            target_normal,
            target_uniform,
        })
    }

    pub fn target(&self) -> TargetDistribution {
        self.target
    }

    pub fn density_floor(&self) -> f64 {
        self.density_floor
    }

    pub fn support(&self) -> (f64, f64) {
        (self.base.min(), self.base.max())
    }

    fn base_cdf(&self, d: f64) -> f64 {
        self.base.smoothed_cdf(self.kernel, self.bandwidth, d)
    }

    pub fn base_density(&self, d: f64) -> f64 {
        self.base.kde_with(self.kernel, self.bandwidth, d)
    }

    /// Derivative of the base density (Gaussian kernels only; zero otherwise).
    fn base_density_slope(&self, d: f64) -> f64 {
        if self.kernel != Kernel::Gaussian {
            return 0.0;
        }
        let h = self.bandwidth;
        let values = self.base.values();
        let reach = self.kernel.support() * h;
        let lo = values.partition_point(|v| *v < d - reach);
        let hi = values.partition_point(|v| *v <= d + reach);
        let mut acc = 0.0;
        for i in lo..hi {
            let u = (d - values[i]) / h;
            acc += self.base.weight(i) * (-u) * self.kernel.pdf(u);
        }
        acc / (h * h)
    }

    fn target_cdf(&self, d: f64) -> f64 {
        match self.target {
            TargetDistribution::Base => self.base_cdf(d),
            TargetDistribution::Normal { .. } => self.target_normal.as_ref().unwrap().cdf(d),
            TargetDistribution::Uniform { .. } => self.target_uniform.as_ref().unwrap().cdf(d),
        }
    }

    fn target_density(&self, d: f64) -> f64 {
        use statrs::distribution::Continuous;
        match self.target {
            TargetDistribution::Base => self.base_density(d),
            TargetDistribution::Normal { .. } => self.target_normal.as_ref().unwrap().pdf(d),
            TargetDistribution::Uniform { .. } => self.target_uniform.as_ref().unwrap().pdf(d),
        }
    }

    fn mixture_cdf(&self, t: f64, d: f64) -> f64 {
        let f = self.base_cdf(d);
        if self.target == TargetDistribution::Base {
            return f;
        }
        f + t * (self.target_cdf(d) - f)
    }

    fn check_support(&self, d: f64) -> Result<()> {
        let (lo, hi) = self.support();
        if d < lo || d > hi {
            return Err(MpeError::domain(format!(
                "rank-preserving policy evaluated at {d}, outside support [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    fn apply(&self, d: f64, t: f64) -> Result<f64> {
        self.check_support(d)?;
        if t == 0.0 || self.target == TargetDistribution::Base {
            return Ok(d);
        }
        let level = self.base_cdf(d);
        // Bracket the root of H_t(x) = level, then bisect.
        let span = (self.support().1 - self.support().0).max(self.bandwidth);
        let mut lo = d - span;
        let mut hi = d + span;
        let mut guard = 0;
        while self.mixture_cdf(t, lo) > level && guard < 60 {
            lo -= span * 2f64.powi(guard.min(30));
            guard += 1;
        }
        guard = 0;
        while self.mixture_cdf(t, hi) < level && guard < 60 {
            hi += span * 2f64.powi(guard.min(30));
            guard += 1;
        }
        while hi - lo > INVERSION_TOL * (1.0 + d.abs()) {
            let mid = 0.5 * (lo + hi);
            if self.mixture_cdf(t, mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn pi_dot(&self, d: f64) -> Result<f64> {
        self.check_support(d)?;
        if self.target == TargetDistribution::Base {
            return Ok(0.0);
        }
        let f = self.base_density(d);
        if f < self.density_floor {
            return Err(MpeError::trimmed(
                format!("f_D({d}) = {f:.3e} below the rank-preserving density floor"),
                1,
            ));
        }
        Ok(-(self.target_cdf(d) - self.base_cdf(d)) / f)
    }

    /// `d/dd π̇(d)` for the rank-preserving derivative.
    fn pi_dot_slope(&self, d: f64) -> Result<f64> {
        if self.target == TargetDistribution::Base {
            return Ok(0.0);
        }
        let f = self.base_density(d);
        if f < self.density_floor {
            return Err(MpeError::trimmed("rank-preserving density floor", 1));
        }
        let gap = self.target_cdf(d) - self.base_cdf(d);
        let gap_slope = self.target_density(d) - f;
        Ok(-gap_slope / f + gap * self.base_density_slope(d) / (f * f))
    }
}

/// A family of policy functions `π_t`.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// `π_t(d) = d + t`.
    LocationShift,
    /// `π_t(d) = μ + l(t) + (d − μ)s(t)` with `l(t) = l_dot·t` and `s(t) = 1 + s_dot·t`.
    LocationScale { mu: f64, l_dot: f64, s_dot: f64 },
    /// `π_t(d) = E[D] + (1 + αt)(d − E[D])`.
    MeanPreserving { alpha: f64, mean_d: f64 },
    RankPreserving(Box<RankPreserving>),
}

impl PolicySpec {
    pub fn location_scale(mu: f64, l_dot: f64, s_dot: f64) -> Result<Self> {
        if !(s_dot > -1.0) || !mu.is_finite() || !l_dot.is_finite() || !s_dot.is_finite() {
            return Err(MpeError::config(
                "location_scale needs finite parameters with s(t) = 1 + s_dot·t > 0 on [0,1]",
            ));
        }
        Ok(PolicySpec::LocationScale { mu, l_dot, s_dot })
    }

    pub fn mean_preserving(alpha: f64, mean_d: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&alpha) || !mean_d.is_finite() {
            return Err(MpeError::config("mean_preserving needs alpha in [-1,1]"));
        }
        Ok(PolicySpec::MeanPreserving { alpha, mean_d })
    }

    pub fn rank_preserving(
        base: EmpiricalDistribution,
        density: KernelSpec,
        target: TargetDistribution,
    ) -> Result<Self> {
        Ok(PolicySpec::RankPreserving(Box::new(RankPreserving::new(
            base, density, target,
        )?)))
    }

    /// `π̇ ≡ 0` identically.
    pub fn is_null(&self) -> bool {
        match self {
            PolicySpec::LocationShift => false,
            PolicySpec::LocationScale { l_dot, s_dot, .. } => *l_dot == 0.0 && *s_dot == 0.0,
            PolicySpec::MeanPreserving { alpha, .. } => *alpha == 0.0,
            PolicySpec::RankPreserving(rp) => rp.target == TargetDistribution::Base,
        }
    }

    /// `π_t(d)`; `π_0` is the identity for every variant.
    pub fn apply(&self, d: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(MpeError::domain(format!("policy index t = {t} outside [0,1]")));
        }
        if t == 0.0 {
            if let PolicySpec::RankPreserving(rp) = self {
                rp.check_support(d)?;
            }
            return Ok(d);
        }
        Ok(match self {
            PolicySpec::LocationShift => d + t,
            PolicySpec::LocationScale { mu, l_dot, s_dot } => {
                mu + l_dot * t + (d - mu) * (1.0 + s_dot * t)
            }
            PolicySpec::MeanPreserving { alpha, mean_d } => {
                mean_d + (1.0 + alpha * t) * (d - mean_d)
            }
            PolicySpec::RankPreserving(rp) => return rp.apply(d, t),
        })
    }

    /// Closed-form `π̇(d)`.
    pub fn pi_dot(&self, d: f64) -> Result<f64> {
        Ok(match self {
            PolicySpec::LocationShift => 1.0,
            PolicySpec::LocationScale { mu, l_dot, s_dot } => l_dot + (d - mu) * s_dot,
            PolicySpec::MeanPreserving { alpha, mean_d } => alpha * (d - mean_d),
            PolicySpec::RankPreserving(rp) => return rp.pi_dot(d),
        })
    }

    /// `d π̇(d) / dd`, needed by the Riesz representer.
    pub fn pi_dot_slope(&self, d: f64) -> Result<f64> {
        Ok(match self {
            PolicySpec::LocationShift => 0.0,
            PolicySpec::LocationScale { s_dot, .. } => *s_dot,
            PolicySpec::MeanPreserving { alpha, .. } => *alpha,
            PolicySpec::RankPreserving(rp) => return rp.pi_dot_slope(d),
        })
    }

    /// Forward difference `(π_t(d) − d)/t`, a numerical check on [`Self::pi_dot`].
    pub fn finite_diff_pi_dot(&self, d: f64, t_step: f64) -> Result<f64> {
        if !(t_step > 0.0 && t_step <= 0.05) {
            return Err(MpeError::domain(format!("t_step {t_step} outside (0, 0.05]")));
        }
        Ok((self.apply(d, t_step)? - d) / t_step)
    }

    /// Serializable summary of this policy.
    pub fn descriptor(&self) -> PolicyDescriptor {
        match self {
            PolicySpec::LocationShift => PolicyDescriptor::LocationShift,
            PolicySpec::LocationScale { mu, l_dot, s_dot } => PolicyDescriptor::LocationScale {
                mu: *mu,
                l_dot: *l_dot,
                s_dot: *s_dot,
            },
            PolicySpec::MeanPreserving { alpha, mean_d } => PolicyDescriptor::MeanPreserving {
                alpha: *alpha,
                mean_d: Some(*mean_d),
            },
            PolicySpec::RankPreserving(rp) => PolicyDescriptor::RankPreserving {
                target: rp.target,
            },
        }
    }
}

/// Data-free description of a policy, as it appears in configuration files.
///
/// Mean-preserving policies may leave `mean_d` unset, in which case the mean of
/// the policy variable in the data (or the known mean of a simulation design)
/// is used. Rank-preserving policies always take `F_D` from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyDescriptor {
    LocationShift,
    LocationScale { mu: f64, l_dot: f64, s_dot: f64 },
    MeanPreserving {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_d: Option<f64>,
    },
    RankPreserving { target: TargetDistribution },
}

impl Default for PolicyDescriptor {
    fn default() -> Self {
        PolicyDescriptor::LocationShift
    }
}

impl PolicyDescriptor {
    /// Build the policy against a sample of the policy variable.
    pub fn build(&self, d_sample: &[f64], known_mean: Option<f64>) -> Result<PolicySpec> {
        match *self {
            PolicyDescriptor::LocationShift => Ok(PolicySpec::LocationShift),
            PolicyDescriptor::LocationScale { mu, l_dot, s_dot } => {
                PolicySpec::location_scale(mu, l_dot, s_dot)
            }
            PolicyDescriptor::MeanPreserving { alpha, mean_d } => {
                let mean = match (mean_d, known_mean) {
                    (Some(m), _) => m,
                    (None, Some(m)) => m,
                    (None, None) => d_sample.iter().sum::<f64>() / d_sample.len().max(1) as f64,
                };
                PolicySpec::mean_preserving(alpha, mean)
            }
            PolicyDescriptor::RankPreserving { target } => PolicySpec::rank_preserving(
                EmpiricalDistribution::from_slice(d_sample)?,
                KernelSpec::gaussian(),
                target,
            ),
        }
    }

    /// Parse `name` or `name:key=value,key=value`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, params) = split_descriptor(text)?;
        let get = |key: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| MpeError::config(format!("policy `{name}` needs `{key}`")))
        };
        let opt = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
        match name.as_str() {
            "location_shift" => Ok(PolicyDescriptor::LocationShift),
            "location_scale" => Ok(PolicyDescriptor::LocationScale {
                mu: opt("mu").unwrap_or(0.0),
                l_dot: opt("l_dot").unwrap_or(0.0),
                s_dot: opt("s_dot").unwrap_or(0.0),
            }),
            "mean_preserving" => Ok(PolicyDescriptor::MeanPreserving {
                alpha: get("alpha")?,
                mean_d: opt("mean_d"),
            }),
            "rank_preserving" => {
                let target = match (opt("normal_mean"), opt("uniform_lo")) {
                    (Some(mean), _) => TargetDistribution::Normal {
                        mean,
                        sd: opt("normal_sd").unwrap_or(1.0),
                    },
                    (None, Some(lo)) => TargetDistribution::Uniform {
                        lo,
                        hi: get("uniform_hi")?,
                    },
                    (None, None) => TargetDistribution::Base,
                };
                Ok(PolicyDescriptor::RankPreserving { target })
            }
            other => Err(MpeError::config(format!("unknown policy `{other}`"))),
        }
    }
}

impl fmt::Display for PolicyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyDescriptor::LocationShift => write!(f, "location_shift"),
            PolicyDescriptor::LocationScale { mu, l_dot, s_dot } => {
                write!(f, "location_scale:mu={mu},l_dot={l_dot},s_dot={s_dot}")
            }
            PolicyDescriptor::MeanPreserving { alpha, mean_d: Some(m) } => {
                write!(f, "mean_preserving:alpha={alpha},mean_d={m}")
            }
            PolicyDescriptor::MeanPreserving { alpha, mean_d: None } => {
                write!(f, "mean_preserving:alpha={alpha}")
            }
            PolicyDescriptor::RankPreserving { target } => match target {
                TargetDistribution::Base => write!(f, "rank_preserving"),
                TargetDistribution::Normal { mean, sd } => {
                    write!(f, "rank_preserving:normal_mean={mean},normal_sd={sd}")
                }
                TargetDistribution::Uniform { lo, hi } => {
                    write!(f, "rank_preserving:uniform_lo={lo},uniform_hi={hi}")
                }
            },
        }
    }
}

/// Split `name:key=value,...` into its name and numeric parameters.
pub(crate) fn split_descriptor(text: &str) -> Result<(String, Vec<(String, f64)>)> {
    let text = text.trim();
    let (name, rest) = match text.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (text, ""),
    };
    if name.is_empty() {
        return Err(MpeError::config("empty descriptor"));
    }
    let mut params = Vec::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| MpeError::config(format!("malformed parameter `{part}` in `{text}`")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| MpeError::config(format!("parameter `{k}` is not a number: `{v}`")))?;
        params.push((k.trim().to_string(), value));
    }
    Ok((name.to_string(), params))
}
