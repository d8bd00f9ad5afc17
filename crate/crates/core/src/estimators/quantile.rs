//! Quantile MPE estimators: plug-in, reweighting and cross-fitted debiased.

use rand::seq::SliceRandom;

use crate::distkit::{EmpiricalDistribution, Kernel};
use crate::error::{MpeError, Result};
use crate::functionals::FunctionalSpec;
use crate::policy::PolicySpec;
use crate::rng::auxiliary_rng;
use crate::smoothing::EquivalentKernel;

use super::first_stage::{cumulate, first_stage_bandwidths, grid_bins, Design, FirstStage, RieszFit};
use super::{BandwidthRecord, Dataset, FirstStageConfig, Method, MpeEstimate};

/// Minimum kernel mass `Σ_i K((Y_i − q̂)/h) / n` for the reweighting estimator.
const MIN_KERNEL_MASS: f64 = 1e-6;
/// Stream tag of the fold permutation.
const FOLD_STREAM: u64 = 1;

/// Outcome law with its resolved kernel bandwidth.
pub(crate) struct Outcome {
    pub dist: EmpiricalDistribution,
    pub kernel: Kernel,
    pub h: f64,
}

impl Outcome {
    pub fn new(y: &[f64], cfg: &FirstStageConfig) -> Result<Self> {
        let dist = EmpiricalDistribution::from_slice(y)?;
        let h = cfg.outcome_kernel.resolve(&dist)?;
        Ok(Outcome {
            dist,
            kernel: cfg.outcome_kernel.kernel,
            h,
        })
    }

    pub fn density(&self, y: f64) -> f64 {
        self.dist.kde_with(self.kernel, self.h, y)
    }

    /// `(q̂_τ, f̂_Y(q̂_τ))`, failing when the density is at or below the floor.
    pub fn point(&self, tau: f64, floor: f64) -> Result<(f64, f64)> {
        let q = self.dist.quantile(tau)?;
        let f = self.density(q);
        if !(f > floor) {
            return Err(MpeError::estimation(format!(
                "outcome density {f:.3e} at the {tau} quantile is at or below the trim floor {floor:.3e}"
            )));
        }
        Ok((q, f))
    }
}

/// `π̇(d)`, with an undefined value reported as `None` (trimmed).
pub(crate) fn policy_weight(policy: &PolicySpec, d: f64) -> Result<Option<f64>> {
    match policy.pi_dot(d) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_trimmed() => Ok(None),
        Err(e) => Err(e),
    }
}

/// `Σ_i π̇(D_i)·∂̂_d F(points[g] | D_i, X_i)` over kept observations, with the
/// used and trimmed counts. `points` must be sorted.
pub(crate) struct SlopeSums {
    pub sums: Vec<f64>,
    pub n_used: usize,
    pub n_trimmed: usize,
}

pub(crate) fn weighted_slope_sums(
    design: &Design,
    policy: &PolicySpec,
    bandwidths: Vec<f64>,
    points: &[f64],
    cfg: &FirstStageConfig,
) -> Result<SlopeSums> {
    let stage = FirstStage::new(design, bandwidths, cfg)?;
    let bins = grid_bins(&design.y, points);
    let mut sums = vec![0.0; points.len()];
    let (mut n_used, mut n_trimmed) = (0, 0);
    let mut ek = EquivalentKernel::default();
    let mut point = vec![0.0; design.dim()];
    let mut cum = Vec::new();
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
        cumulate(&ek, &ek.slope, &bins, points.len(), &mut cum);
        for (s, c) in sums.iter_mut().zip(&cum) {
            *s += pd * c;
        }
        n_used += 1;
    }
    Ok(SlopeSums { sums, n_used, n_trimmed })
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    order
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(MpeError::config("no quantile levels requested"));
    }
    for t in taus {
        FunctionalSpec::quantile(*t)?;
    }
    Ok(())
}

fn base_estimate(
    policy: &PolicySpec,
    tau: f64,
    method: Method,
    cv: bool,
    n: usize,
    bandwidths: BandwidthRecord,
) -> MpeEstimate {
    MpeEstimate {
        value: f64::NAN,
        functional: FunctionalSpec::Quantile { tau },
        policy: policy.descriptor(),
        method,
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

pub(crate) fn plugin_core(
    design: &Design,
    policy: &PolicySpec,
    taus: &[f64],
    cfg: &FirstStageConfig,
    cv: bool,
    cv_bandwidths: Option<Vec<f64>>,
) -> Result<Vec<MpeEstimate>> {
    let outcome = Outcome::new(&design.y, cfg)?;
    let pts = taus
        .iter()
        .map(|t| outcome.point(*t, cfg.trim_floor))
        .collect::<Result<Vec<_>>>()?;
    let qs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let order = sorted_order(&qs);
    let sorted: Vec<f64> = order.iter().map(|j| qs[*j]).collect();
    let bw = first_stage_bandwidths(design, cfg)?;
    let sums = weighted_slope_sums(design, policy, bw.clone(), &sorted, cfg)?;
    if sums.n_used == 0 {
        return Err(MpeError::estimation("every observation was trimmed"));
    }
    let mut out = Vec::with_capacity(taus.len());
    for (j, tau) in taus.iter().enumerate() {
        let rank = order.iter().position(|o| *o == j).unwrap();
        let (q, f) = pts[j];
        let record = BandwidthRecord {
            first_stage: bw.clone(),
            outcome: outcome.h,
            riesz: None,
            control_variable: cv_bandwidths.clone(),
        };
        let mut est = base_estimate(policy, *tau, Method::Plugin, cv, design.n(), record);
        est.value = -sums.sums[rank] / design.n() as f64 / f;
        est.n_used = sums.n_used;
        est.n_trimmed = sums.n_trimmed;
        est.quantile = Some(q);
        est.outcome_density = Some(f);
        est.note_trimming();
        out.push(est);
    }
    Ok(out)
}

/// Pool-adjacent-violators projection onto nondecreasing sequences, clipped to `[0, 1]`.
pub(crate) fn rearrange(values: &mut [f64]) {
    let mut level: Vec<f64> = Vec::with_capacity(values.len());
    let mut count: Vec<usize> = Vec::with_capacity(values.len());
    for v in values.iter() {
        level.push(*v);
        count.push(1);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (b, cb) = (level.pop().unwrap(), count.pop().unwrap());
            let (a, ca) = (level.pop().unwrap(), count.pop().unwrap());
            let c = ca + cb;
            level.push((a * ca as f64 + b * cb as f64) / c as f64);
            count.push(c);
        }
    }
    let mut k = 0;
    for (l, c) in level.iter().zip(&count) {
        for v in &mut values[k..k + c] {
            *v = l.clamp(0.0, 1.0);
        }
        k += c;
    }
}

/// Inverse of a nondecreasing CDF tabulated at `ys`, linear between knots.
fn inverse_cdf(ys: &[f64], cdf: &[f64], alpha: f64) -> f64 {
    let g = cdf.partition_point(|c| *c < alpha);
    if g == 0 {
        return ys[0];
    }
    if g >= ys.len() {
        return ys[ys.len() - 1];
    }
    let (c0, c1) = (cdf[g - 1], cdf[g]);
    if c1 <= c0 {
        return ys[g];
    }
    ys[g - 1] + (alpha - c0) / (c1 - c0) * (ys[g] - ys[g - 1])
}

/// Conditional rank `ζ` with `Q̂(ζ) = q` on the rearranged CDF, searched over
/// the alpha grid and refined by bisection. Returns `(ζ, Q̂(ζ))`.
fn matching_rank(ys: &[f64], cdf: &[f64], alphas: &[f64], q: f64, tol: f64) -> Option<(f64, f64)> {
    let qa = |a: f64| inverse_cdf(ys, cdf, a);
    let first = qa(alphas[0]);
    let last = qa(alphas[alphas.len() - 1]);
    if q < first - tol || q > last + tol {
        return None;
    }
    let j = alphas.partition_point(|a| qa(*a) < q);
    if j == 0 {
        return Some((alphas[0], first));
    }
    if j == alphas.len() {
        return Some((alphas[j - 1], last));
    }
    let (mut lo, mut hi) = (alphas[j - 1], alphas[j]);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..100 {
        mid = 0.5 * (lo + hi);
        let v = qa(mid);
        if (v - q).abs() <= tol {
            return Some((mid, v));
        }
        if v < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((mid, qa(mid)))
}

pub(crate) fn reweight_core(
    design: &Design,
    policy: &PolicySpec,
    taus: &[f64],
    cfg: &FirstStageConfig,
    cv: bool,
    cv_bandwidths: Option<Vec<f64>>,
) -> Result<Vec<MpeEstimate>> {
    let outcome = Outcome::new(&design.y, cfg)?;
    let pts = taus
        .iter()
        .map(|t| outcome.point(*t, cfg.trim_floor))
        .collect::<Result<Vec<_>>>()?;
    let bw = first_stage_bandwidths(design, cfg)?;
    let stage = FirstStage::new(design, bw.clone(), cfg)?;
    let g = cfg.y_grid;
    let ys: Vec<f64> = (0..g)
        .map(|j| outcome.dist.quantile_unchecked((j as f64 + 0.5) / g as f64))
        .collect();
    let bins = grid_bins(&design.y, &ys);
    let alphas = cfg.alpha_grid();
    let tol = 1e-3 * outcome.dist.iqr().max(f64::MIN_POSITIVE);
    let (h, kernel) = (outcome.h, outcome.kernel);
    let reach = kernel.support() * h;
    let n = design.n();

    let mut num = vec![0.0; taus.len()];
    let mut den = vec![0.0; taus.len()];
    let mut mass = vec![0.0; taus.len()];
    let mut used = vec![0usize; taus.len()];
    let mut trimmed = vec![0usize; taus.len()];
    let mut ek = EquivalentKernel::default();
    let mut point = vec![0.0; design.dim()];
    let mut cdf = Vec::new();
    for i in 0..n {
        let yi = design.y[i];
        let weights: Vec<f64> = pts
            .iter()
            .map(|(q, _)| if (yi - q).abs() <= reach { kernel.pdf((yi - q) / h) } else { 0.0 })
            .collect();
        if weights.iter().all(|w| *w == 0.0) {
            continue;
        }
        for (m, w) in mass.iter_mut().zip(&weights) {
            *m += w;
        }
        let pd = match policy_weight(policy, design.d()[i])? {
            Some(v) => v,
            None => {
                for (t, w) in trimmed.iter_mut().zip(&weights) {
                    *t += usize::from(*w > 0.0);
                }
                continue;
            }
        };
        if pd == 0.0 {
            for j in 0..taus.len() {
                if weights[j] > 0.0 {
                    den[j] += weights[j];
                    used[j] += 1;
                }
            }
            continue;
        }
        design.point(i, &mut point);
        if !stage.fit(&point, &mut ek) {
            for (t, w) in trimmed.iter_mut().zip(&weights) {
                *t += usize::from(*w > 0.0);
            }
            continue;
        }
        cumulate(&ek, &ek.level, &bins, g, &mut cdf);
        rearrange(&mut cdf);
        for (j, (q, _)) in pts.iter().enumerate() {
            if weights[j] == 0.0 {
                continue;
            }
            let Some((_, y_star)) = matching_rank(&ys, &cdf, &alphas, *q, tol) else {
                trimmed[j] += 1;
                continue;
            };
            // Implicit derivative of the kernel-smoothed conditional quantile.
            let mut dens = 0.0;
            let mut dslope = 0.0;
            for ((jj, l0), l1) in ek.index.iter().zip(&ek.level).zip(&ek.slope) {
                let u = (y_star - design.y[*jj]) / h;
                dens += l0 * kernel.pdf(u);
                dslope += l1 * kernel.cdf_fast(u);
            }
            dens /= h;
            if !(dens > cfg.trim_floor) {
                trimmed[j] += 1;
                continue;
            }
            let beta = -dslope / dens;
            num[j] += weights[j] * pd * beta;
            den[j] += weights[j];
            used[j] += 1;
        }
    }

    let mut out = Vec::with_capacity(taus.len());
    for (j, tau) in taus.iter().enumerate() {
        if mass[j] / (n as f64) < MIN_KERNEL_MASS || !(den[j] > 0.0) {
            return Err(MpeError::estimation(format!(
                "kernel weight mass around the {tau} quantile is too small"
            )));
        }
        let record = BandwidthRecord {
            first_stage: bw.clone(),
            outcome: h,
            riesz: None,
            control_variable: cv_bandwidths.clone(),
        };
        let mut est = base_estimate(policy, *tau, Method::Reweight, cv, n, record);
        est.value = num[j] / den[j];
        est.n_used = used[j];
        est.n_trimmed = trimmed[j];
        est.quantile = Some(pts[j].0);
        est.outcome_density = Some(pts[j].1);
        est.note_trimming();
        out.push(est);
    }
    Ok(out)
}

/// Fold label of every observation from a seeded permutation.
pub(crate) fn fold_labels(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut auxiliary_rng(seed, FOLD_STREAM));
    let mut labels = vec![0; n];
    for (pos, i) in perm.iter().enumerate() {
        labels[*i] = pos % folds;
    }
    labels
}

/// `ψ = π̇(d)·∂_d F̂(q | d, x) − α̂(d, x)·(1{y ≤ q} − F̂(q | d, x))`.
#[inline]
pub(crate) fn orthogonal_score(pi_dot: f64, cdf_slope: f64, alpha: f64, indicator: f64, cdf: f64) -> f64 {
    pi_dot * cdf_slope - alpha * (indicator - cdf)
}

pub(crate) fn debiased_core(
    design: &Design,
    policy: &PolicySpec,
    taus: &[f64],
    cfg: &FirstStageConfig,
    cv: bool,
    cv_bandwidths: Option<Vec<f64>>,
) -> Result<Vec<MpeEstimate>> {
    let outcome = Outcome::new(&design.y, cfg)?;
    let pts = taus
        .iter()
        .map(|t| outcome.point(*t, cfg.trim_floor))
        .collect::<Result<Vec<_>>>()?;
    let qs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let order = sorted_order(&qs);
    let sorted: Vec<f64> = order.iter().map(|j| qs[*j]).collect();
    let n = design.n();
    if n < cfg.folds * 2 {
        return Err(MpeError::config("too few observations for the requested folds"));
    }
    let bw = first_stage_bandwidths(design, cfg)?;
    let riesz_bw = RieszFit::new(design, cfg)?.bandwidths;
    let labels = fold_labels(n, cfg.folds, cfg.seed);
    let mut fold_sizes = vec![0usize; cfg.folds];
    for l in &labels {
        fold_sizes[*l] += 1;
    }

    let mut sums = vec![0.0; taus.len()];
    let (mut n_used, mut n_trimmed) = (0usize, 0usize);
    let mut ek = EquivalentKernel::default();
    let mut point = vec![0.0; design.dim()];
    let (mut lv, mut sl) = (Vec::new(), Vec::new());
    for k in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..n).filter(|i| labels[*i] != k).collect();
        let train = design.select(&train_idx);
        let stage = FirstStage::new(&train, bw.clone(), cfg)?;
        let riesz = RieszFit::with_bandwidths(&train, cfg, riesz_bw.clone())?;
        let bins = grid_bins(&train.y, &sorted);
        for i in (0..n).filter(|i| labels[*i] == k) {
            let Some(pd) = policy_weight(policy, design.d()[i])? else {
                n_trimmed += 1;
                continue;
            };
            design.point(i, &mut point);
            let Some(alpha) = riesz.alpha(policy, &point) else {
                n_trimmed += 1;
                continue;
            };
            if !stage.fit(&point, &mut ek) {
                n_trimmed += 1;
                continue;
            }
            cumulate(&ek, &ek.level, &bins, sorted.len(), &mut lv);
            cumulate(&ek, &ek.slope, &bins, sorted.len(), &mut sl);
            let yi = design.y[i];
            for (r, s) in sums.iter_mut().enumerate() {
                let f_hat = lv[r].clamp(0.0, 1.0);
                let ind = if yi <= sorted[r] { 1.0 } else { 0.0 };
                *s += orthogonal_score(pd, sl[r], alpha, ind, f_hat);
            }
            n_used += 1;
        }
    }
    if n_used == 0 {
        return Err(MpeError::estimation("every observation was trimmed"));
    }
    let mut out = Vec::with_capacity(taus.len());
    for (j, tau) in taus.iter().enumerate() {
        let rank = order.iter().position(|o| *o == j).unwrap();
        let (q, f) = pts[j];
        let record = BandwidthRecord {
            first_stage: bw.clone(),
            outcome: outcome.h,
            riesz: Some(riesz_bw.clone()),
            control_variable: cv_bandwidths.clone(),
        };
        let mut est = base_estimate(policy, *tau, Method::Debiased, cv, n, record);
        est.value = -sums[rank] / n as f64 / f;
        est.n_used = n_used;
        est.n_trimmed = n_trimmed;
        est.fold_sizes = Some(fold_sizes.clone());
        est.quantile = Some(q);
        est.outcome_density = Some(f);
        est.note_trimming();
        out.push(est);
    }
    Ok(out)
}

pub(crate) fn quantile_dispatch(
    design: &Design,
    policy: &PolicySpec,
    taus: &[f64],
    method: Method,
    cfg: &FirstStageConfig,
    cv: bool,
    cv_bandwidths: Option<Vec<f64>>,
) -> Result<Vec<MpeEstimate>> {
    cfg.validate()?;
    check_taus(taus)?;
    match method {
        Method::Plugin => plugin_core(design, policy, taus, cfg, cv, cv_bandwidths),
        Method::Reweight => reweight_core(design, policy, taus, cfg, cv, cv_bandwidths),
        Method::Debiased => debiased_core(design, policy, taus, cfg, cv, cv_bandwidths),
    }
}

/// Quantile MPE at several levels sharing one set of first-stage fits.
pub fn quantile_mpe_multi(
    data: &Dataset,
    policy: &PolicySpec,
    taus: &[f64],
    method: Method,
    cfg: &FirstStageConfig,
) -> Result<Vec<MpeEstimate>> {
    quantile_dispatch(&Design::new(data, None), policy, taus, method, cfg, false, None)
}

fn single(mut v: Vec<MpeEstimate>) -> MpeEstimate {
    v.pop().expect("one level requested")
}

/// `θ̂_Q(τ) = −(1/n) Σ π̇(D_i) ∂̂_d F(q̂_τ | D_i, X_i) / f̂_Y(q̂_τ)`.
pub fn plugin_quantile_mpe(data: &Dataset, policy: &PolicySpec, tau: f64, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    quantile_mpe_multi(data, policy, &[tau], Method::Plugin, cfg).map(single)
}

/// Kernel-weighted average of `π̇(D)·β̂^CQD(ζ̂_τ(D, X), D, X)` around `Y = q̂_τ`.
pub fn reweight_quantile_mpe(data: &Dataset, policy: &PolicySpec, tau: f64, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    quantile_mpe_multi(data, policy, &[tau], Method::Reweight, cfg).map(single)
}

/// Cross-fitted estimator built on the orthogonal score.
pub fn debiased_quantile_mpe(data: &Dataset, policy: &PolicySpec, tau: f64, cfg: &FirstStageConfig) -> Result<MpeEstimate> {
    quantile_mpe_multi(data, policy, &[tau], Method::Debiased, cfg).map(single)
}

/// `β̂^UQR(τ)`: the plug-in estimator under a location shift.
pub fn uqr_estimand(data: &Dataset, tau: f64, cfg: &FirstStageConfig) -> Result<f64> {
    plugin_quantile_mpe(data, &PolicySpec::LocationShift, tau, cfg).map(|e| e.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distkit::KernelSpec;
    use crate::policy::TargetDistribution;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn linear(n: usize, slope: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = d
            .iter()
            .map(|a| slope * a + { let v: f64 = StandardNormal.sample(&mut rng); v })
            .collect();
        Dataset::new(y, d, vec![], None).unwrap()
    }

    #[test]
    fn pava_projects_to_monotone() {
        let mut v = vec![0.1, 0.3, 0.2, 0.2, 0.9, 1.2, 0.8];
        rearrange(&mut v);
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
        assert_abs_diff_eq!(v[1], 0.7 / 3.0, epsilon = 1e-12);
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn matching_rank_inverts_and_flags_out_of_hull() {
        let ys: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let cdf = ys.clone();
        let alphas: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let (z, v) = matching_rank(&ys, &cdf, &alphas, 0.437, 1e-6).unwrap();
        assert_abs_diff_eq!(z, 0.437, epsilon = 1e-5);
        assert_abs_diff_eq!(v, 0.437, epsilon = 1e-6);
        assert!(matching_rank(&ys, &cdf, &alphas, 0.999, 1e-6).is_none());
    }

    #[test]
    fn estimators_recover_unit_effect() {
        let data = linear(2000, 1.0, 11);
        let cfg = FirstStageConfig::default();
        let p = PolicySpec::LocationShift;
        assert_abs_diff_eq!(plugin_quantile_mpe(&data, &p, 0.5, &cfg).unwrap().value, 1.0, epsilon = 0.1);
        assert_abs_diff_eq!(reweight_quantile_mpe(&data, &p, 0.5, &cfg).unwrap().value, 1.0, epsilon = 0.15);
        let deb = debiased_quantile_mpe(&data, &p, 0.5, &cfg).unwrap();
        assert_abs_diff_eq!(deb.value, 1.0, epsilon = 0.1);
        assert_eq!(deb.fold_sizes.as_ref().unwrap().iter().sum::<usize>(), 2000);
        assert!(deb.n_used + deb.n_trimmed <= deb.n);
    }

    #[test]
    fn reweighting_recovers_slope_two() {
        let data = linear(3000, 2.0, 12);
        let v = reweight_quantile_mpe(&data, &PolicySpec::LocationShift, 0.3, &FirstStageConfig::default()).unwrap();
        assert_abs_diff_eq!(v.value, 2.0, epsilon = 0.3);
    }

    #[test]
    fn independent_outcome_gives_zero() {
        let data = linear(2000, 0.0, 13);
        let cfg = FirstStageConfig::default();
        let p = PolicySpec::LocationShift;
        assert_abs_diff_eq!(plugin_quantile_mpe(&data, &p, 0.5, &cfg).unwrap().value, 0.0, epsilon = 0.1);
        assert_abs_diff_eq!(debiased_quantile_mpe(&data, &p, 0.5, &cfg).unwrap().value, 0.0, epsilon = 0.1);
        assert_abs_diff_eq!(uqr_estimand(&data, 0.5, &cfg).unwrap(), 0.0, epsilon = 0.1);
    }

    #[test]
    fn null_policy_is_exactly_zero() {
        let data = linear(500, 1.0, 14);
        let base = EmpiricalDistribution::from_slice(data.d()).unwrap();
        let p = PolicySpec::rank_preserving(base, KernelSpec::gaussian(), TargetDistribution::Base).unwrap();
        let cfg = FirstStageConfig::default();
        assert_eq!(plugin_quantile_mpe(&data, &p, 0.5, &cfg).unwrap().value, 0.0);
        assert_eq!(reweight_quantile_mpe(&data, &p, 0.5, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn location_shift_plugin_is_the_uqr_estimand() {
        let data = linear(800, 1.0, 15);
        let cfg = FirstStageConfig::default();
        let a = plugin_quantile_mpe(&data, &PolicySpec::LocationShift, 0.4, &cfg).unwrap().value;
        let b = uqr_estimand(&data, 0.4, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn multi_level_matches_single_level() {
        let data = linear(600, 1.0, 16);
        let cfg = FirstStageConfig::default();
        let p = PolicySpec::LocationShift;
        for method in [Method::Plugin, Method::Reweight, Method::Debiased] {
            let multi = quantile_mpe_multi(&data, &p, &[0.75, 0.25], method, &cfg).unwrap();
            let one = quantile_mpe_multi(&data, &p, &[0.25], method, &cfg).unwrap();
            assert_abs_diff_eq!(multi[1].value, one[0].value, epsilon = 1e-12);
        }
    }

    #[test]
    fn low_density_quantile_fails() {
        let data = linear(500, 1.0, 17);
        let cfg = FirstStageConfig { trim_floor: 10.0, ..Default::default() };
        let err = plugin_quantile_mpe(&data, &PolicySpec::LocationShift, 0.5, &cfg).unwrap_err();
        assert!(matches!(err, MpeError::Estimation(_)));
    }
}
