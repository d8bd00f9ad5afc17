//! Local-linear first stages and the kernel Riesz representer.

use crate::error::{MpeError, Result};
use crate::policy::PolicySpec;
use crate::smoothing::{rule_of_thumb_bandwidths, EquivalentKernel, LocalLinear, ProductKde};

use super::{Dataset, FirstStageConfig};

/// Outcome plus conditioning columns, the first of which is `D`.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub y: Vec<f64>,
    pub cols: Vec<Vec<f64>>,
}

impl Design {
    /// Columns `D`, then `extra` if given, then `X₁..X_k`.
    pub fn new(data: &Dataset, extra: Option<&[f64]>) -> Self {
        let mut cols = vec![data.d().to_vec()];
        if let Some(v) = extra {
            cols.push(v.to_vec());
        }
        cols.extend(data.x().iter().cloned());
        Design {
            y: data.y().to_vec(),
            cols,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.cols[0]
    }

    pub fn point(&self, i: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.cols) {
            *o = c[i];
        }
    }

    pub fn select(&self, idx: &[usize]) -> Design {
        let pick = |c: &[f64]| idx.iter().map(|i| c[*i]).collect::<Vec<_>>();
        Design {
            y: pick(&self.y),
            cols: self.cols.iter().map(|c| pick(c)).collect(),
        }
    }

    fn col_refs(&self) -> Vec<&[f64]> {
        self.cols.iter().map(Vec::as_slice).collect()
    }
}

pub(crate) fn first_stage_bandwidths(design: &Design, cfg: &FirstStageConfig) -> Result<Vec<f64>> {
    match &cfg.bandwidths {
        Some(h) if h.len() == design.dim() => Ok(h.clone()),
        Some(h) => Err(MpeError::config(format!(
            "{} explicit bandwidths given for {} conditioning variables",
            h.len(),
            design.dim()
        ))),
        None => Ok(rule_of_thumb_bandwidths(&design.col_refs())?
            .into_iter()
            .map(|h| h * cfg.bandwidth_scale)
            .collect()),
    }
}

/// Local-linear smoother over the conditioning variables of a design.
#[derive(Debug, Clone)]
pub(crate) struct FirstStage {
    ll: LocalLinear,
    min_ess: f64,
}

impl FirstStage {
    pub fn new(design: &Design, bandwidths: Vec<f64>, cfg: &FirstStageConfig) -> Result<Self> {
        Ok(FirstStage {
            ll: LocalLinear::new(&design.col_refs(), bandwidths)?,
            min_ess: cfg.min_local_ess,
        })
    }

    /// Equivalent kernel at `point`; `false` marks the point trimmed.
    pub fn fit(&self, point: &[f64], out: &mut EquivalentKernel) -> bool {
        self.ll.fit_into(point, out) && out.effective_size >= self.min_ess
    }
}

/// For each training outcome, the first index `g` of the sorted evaluation
/// points with `y ≤ points[g]`.
pub(crate) fn grid_bins(y: &[f64], points: &[f64]) -> Vec<usize> {
    y.iter().map(|v| points.partition_point(|p| p < v)).collect()
}

/// `out[g] = Σ_{j : bins[j] ≤ g} w_j`, that is `Σ_j w_j 1{y_j ≤ points[g]}`.
pub(crate) fn cumulate(ek: &EquivalentKernel, weights: &[f64], bins: &[usize], len: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(len + 1, 0.0);
    for (j, w) in ek.index.iter().zip(weights) {
        out[bins[*j]] += w;
    }
    let mut acc = 0.0;
    for v in out.iter_mut() {
        acc += *v;
        *v = acc;
    }
    out.truncate(len);
}

fn single_point_fit(data: &Dataset, cfg: &FirstStageConfig, d: f64, x: &[f64]) -> Result<EquivalentKernel> {
    cfg.validate()?;
    if x.len() != data.k() {
        return Err(MpeError::config(format!(
            "evaluation point has {} covariates, data has {}",
            x.len(),
            data.k()
        )));
    }
    let design = Design::new(data, None);
    let stage = FirstStage::new(&design, first_stage_bandwidths(&design, cfg)?, cfg)?;
    let mut point = vec![d];
    point.extend_from_slice(x);
    let mut ek = EquivalentKernel::default();
    if !stage.fit(&point, &mut ek) {
        return Err(MpeError::trimmed(
            "local design singular or effective local sample below the floor",
            1,
        ));
    }
    Ok(ek)
}

/// `F̂_{Y|D,X}(y | d, x)` by local-linear regression of `1{Y ≤ y}`, clipped to `[0, 1]`.
pub fn cond_cdf(data: &Dataset, cfg: &FirstStageConfig, y: f64, d: f64, x: &[f64]) -> Result<f64> {
    let ek = single_point_fit(data, cfg, d, x)?;
    let yv = data.y();
    Ok(ek.level_of(|j| if yv[j] <= y { 1.0 } else { 0.0 }).clamp(0.0, 1.0))
}

/// `∂_d F̂_{Y|D,X}(y | d, x)`: the `D`-slope of the same local-linear fit.
pub fn cond_cdf_dderiv(data: &Dataset, cfg: &FirstStageConfig, y: f64, d: f64, x: &[f64]) -> Result<f64> {
    let ek = single_point_fit(data, cfg, d, x)?;
    let yv = data.y();
    Ok(ek.slope_of(|j| if yv[j] <= y { 1.0 } else { 0.0 }))
}

/// Kernel estimate of `α(d, x) = ∂_d[π̇(d) f_{D,X}(d, x)] / f_{D,X}(d, x)`.
#[derive(Debug, Clone)]
pub(crate) struct RieszFit {
    kde: ProductKde,
    floor: f64,
    pub bandwidths: Vec<f64>,
}

impl RieszFit {
    pub fn new(design: &Design, cfg: &FirstStageConfig) -> Result<Self> {
        let bandwidths: Vec<f64> = rule_of_thumb_bandwidths(&design.col_refs())?
            .into_iter()
            .map(|h| h * cfg.riesz_bandwidth_scale)
            .collect();
        Self::with_bandwidths(design, cfg, bandwidths)
    }

    pub fn with_bandwidths(design: &Design, cfg: &FirstStageConfig, bandwidths: Vec<f64>) -> Result<Self> {
        Ok(RieszFit {
            kde: ProductKde::new(&design.col_refs(), bandwidths.clone())?,
            floor: cfg.trim_floor,
            bandwidths,
        })
    }

    /// `None` marks a trimmed point (low density or undefined `π̇`).
    pub fn alpha(&self, policy: &PolicySpec, point: &[f64]) -> Option<f64> {
        let ds = self.kde.eval(point);
        if !(ds.density >= self.floor) {
            return None;
        }
        let d = point[0];
        let pd = policy.pi_dot(d).ok()?;
        let slope = policy.pi_dot_slope(d).ok()?;
        Some(slope + pd * ds.slope / ds.density)
    }
}

/// `α̂(d, x)` fit on the whole dataset.
pub fn riesz_representer(data: &Dataset, policy: &PolicySpec, cfg: &FirstStageConfig, d: f64, x: &[f64]) -> Result<f64> {
    cfg.validate()?;
    let design = Design::new(data, None);
    let fit = RieszFit::new(&design, cfg)?;
    let mut point = vec![d];
    point.extend_from_slice(x);
    fit.alpha(policy, &point)
        .ok_or_else(|| MpeError::trimmed("design density below the trim floor", 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn linear(n: usize, slope: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = normals(n, &mut rng);
        let e = normals(n, &mut rng);
        let y = d.iter().zip(&e).map(|(a, b)| slope * a + b).collect();
        Dataset::new(y, d, vec![], None).unwrap()
    }

    #[test]
    fn cond_cdf_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let n = 5000;
        let y: Vec<f64> = (0..n).map(|_| u.sample(&mut rng)).collect();
        let d = normals(n, &mut rng);
        let x = vec![normals(n, &mut rng)];
        let data = Dataset::new(y, d, x, None).unwrap();
        let cfg = FirstStageConfig::default();
        assert_abs_diff_eq!(cond_cdf(&data, &cfg, 0.5, 0.1, &[0.2]).unwrap(), 0.5, epsilon = 0.05);
        assert_eq!(cond_cdf(&data, &cfg, -1.0, 0.1, &[0.2]).unwrap(), 0.0);
        assert_eq!(cond_cdf(&data, &cfg, 2.0, 0.1, &[0.2]).unwrap(), 1.0);
        assert!(cond_cdf(&data, &cfg, 0.5, 0.1, &[]).is_err());
    }

    #[test]
    fn cond_cdf_derivative_examples() {
        let cfg = FirstStageConfig::default();
        // Single-draw sd is about 0.045 at this bandwidth, so average 10 draws.
        let v = (2..12)
            .map(|seed| cond_cdf_dderiv(&linear(10_000, 1.0, seed), &cfg, 0.3, 0.3, &[]).unwrap())
            .sum::<f64>()
            / 10.0;
        assert_abs_diff_eq!(v, -0.3989, epsilon = 0.05);
        let data = linear(10_000, 2.0, 3);
        let v = cond_cdf_dderiv(&data, &cfg, 0.6, 0.3, &[]).unwrap();
        assert_abs_diff_eq!(v, -2.0 * 0.3989, epsilon = 0.1);
        let data = linear(10_000, 0.0, 4);
        let v = cond_cdf_dderiv(&data, &cfg, 0.2, 0.0, &[]).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 0.05);
    }

    #[test]
    fn far_point_is_trimmed() {
        let data = linear(500, 1.0, 5);
        let err = cond_cdf(&data, &FirstStageConfig::default(), 0.0, 60.0, &[]).unwrap_err();
        assert!(err.is_trimmed());
    }

    #[test]
    fn gaussian_score_representer() {
        let data = linear(10_000, 1.0, 6);
        let a = riesz_representer(&data, &PolicySpec::LocationShift, &FirstStageConfig::default(), 1.0, &[]).unwrap();
        assert_abs_diff_eq!(a, -1.0, epsilon = 0.15);
    }

    #[test]
    fn cumulate_counts_below_points() {
        let ek = EquivalentKernel {
            index: vec![0, 1, 2],
            level: vec![0.2, 0.3, 0.5],
            slope: vec![1.0, -1.0, 0.0],
            effective_size: 3.0,
            ..Default::default()
        };
        let y = [0.5, 1.5, 2.5];
        let points = [0.0, 1.0, 2.0, 3.0];
        let bins = grid_bins(&y, &points);
        let mut out = Vec::new();
        cumulate(&ek, &ek.level, &bins, points.len(), &mut out);
        assert_eq!(out, vec![0.0, 0.2, 0.5, 1.0]);
    }
}
