//! Kernel smoothers shared by the oracles and the estimators: local-linear
//! regression with product Gaussian kernels, product kernel densities with an
//! analytic derivative in the first coordinate, and one-dimensional
//! Nadaraya–Watson sums.
//!
//! Training data are sorted by the first regressor so that each evaluation
//! only visits observations within [`GAUSS_CUTOFF`] bandwidths.

use crate::distkit::{EmpiricalDistribution, GAUSS_CUTOFF};
use crate::error::{MpeError, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Per-dimension bandwidth `1.06 · σ̂_j · n^(-1/(5 + k))` where `k` counts the
/// regressors beyond the first.
pub fn rule_of_thumb_bandwidths(columns: &[&[f64]]) -> Result<Vec<f64>> {
    let extra = columns.len().saturating_sub(1) as f64;
    columns
        .iter()
        .map(|col| {
            let dist = EmpiricalDistribution::from_slice(col)?;
            let scale = dist.robust_scale();
            if !(scale > 0.0) {
                return Err(MpeError::config("regressor with zero dispersion"));
            }
            Ok(1.06 * scale * (col.len() as f64).powf(-1.0 / (5.0 + extra)))
        })
        .collect()
}

/// Equivalent-kernel weights of a local-linear fit at one point.
///
/// The fitted level of any target `g` is `Σ level_j g_j` and its slope in the
/// first regressor is `Σ slope_j g_j`, summing over `index`.
#[derive(Debug, Default, Clone)]
pub struct EquivalentKernel {
    pub index: Vec<usize>,
    pub level: Vec<f64>,
    pub slope: Vec<f64>,
    /// Kish effective sample size of the raw kernel weights.
    pub effective_size: f64,
    pub(crate) raw: Vec<f64>,
}

impl EquivalentKernel {
    pub fn level_of(&self, target: impl Fn(usize) -> f64) -> f64 {
        self.index.iter().zip(&self.level).map(|(j, w)| w * target(*j)).sum()
    }

    pub fn slope_of(&self, target: impl Fn(usize) -> f64) -> f64 {
        self.index.iter().zip(&self.slope).map(|(j, w)| w * target(*j)).sum()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Local-linear smoother with product Gaussian kernels.
#[derive(Debug, Clone)]
pub struct LocalLinear {
    /// Regressor columns, each sorted by the first regressor.
    cols: Vec<Vec<f64>>,
    /// Original training indices in sorted order.
    order: Vec<usize>,
    bandwidths: Vec<f64>,
    cutoff: f64,
}

impl LocalLinear {
    pub fn new(columns: &[&[f64]], bandwidths: Vec<f64>) -> Result<Self> {
        if columns.is_empty() || columns.len() != bandwidths.len() {
            return Err(MpeError::config("local-linear design needs one bandwidth per regressor"));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(MpeError::config("regressor columns differ in length"));
        }
        if bandwidths.iter().any(|h| !(*h > 0.0)) {
            return Err(MpeError::config("bandwidths must be positive"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| columns[0][*a].total_cmp(&columns[0][*b]));
        let cols = columns
            .iter()
            .map(|c| order.iter().map(|i| c[*i]).collect())
            .collect();
        Ok(LocalLinear {
            cols,
            order,
            bandwidths,
            cutoff: GAUSS_CUTOFF,
        })
    }

    /// Drop the kernel window entirely (every observation gets a weight).
    pub fn without_window(mut self) -> Self {
        self.cutoff = f64::INFINITY;
        self
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Fit at `point`, filling `out`. Returns `false` when the local design is
    /// singular or no observation falls inside the window.
    pub fn fit_into(&self, point: &[f64], out: &mut EquivalentKernel) -> bool {
        debug_assert_eq!(point.len(), self.dim());
        let p = self.dim();
        let q = p + 1;
        out.index.clear();
        out.level.clear();
        out.slope.clear();
        out.raw.clear();
        out.effective_size = 0.0;

        let first = &self.cols[0];
        let (lo, hi) = if self.cutoff.is_finite() {
            let reach = self.cutoff * self.bandwidths[0];
            (
                first.partition_point(|v| *v < point[0] - reach),
                first.partition_point(|v| *v <= point[0] + reach),
            )
        } else {
            (0, first.len())
        };
        if hi <= lo {
            return false;
        }

        // Log-weights, shifted by their minimum exponent for stability.
        let mut exps: Vec<f64> = Vec::with_capacity(hi - lo);
        let mut keep: Vec<usize> = Vec::with_capacity(hi - lo);
        let cut2 = self.cutoff * self.cutoff;
        'rows: for s in lo..hi {
            let mut e = 0.0;
            for k in 0..p {
                let u = (self.cols[k][s] - point[k]) / self.bandwidths[k];
                if k > 0 && u * u > cut2 {
                    continue 'rows;
                }
                e += u * u;
            }
            exps.push(e);
            keep.push(s);
        }
        if keep.is_empty() {
            return false;
        }
        let shift = exps.iter().copied().fold(f64::INFINITY, f64::min);

        let mut gram = [0.0f64; 36];
        let mut z = [0.0f64; 6];
        let mut sum_w = 0.0;
        let mut sum_w2 = 0.0;
        for (e, s) in exps.iter().zip(&keep) {
            let w = (-0.5 * (e - shift)).exp();
            out.raw.push(w);
            sum_w += w;
            sum_w2 += w * w;
            z[0] = 1.0;
            for k in 0..p {
                z[k + 1] = self.cols[k][*s] - point[k];
            }
            for a in 0..q {
                let wa = w * z[a];
                for b in a..q {
                    gram[a * q + b] += wa * z[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                gram[a * q + b] = gram[b * q + a];
            }
        }
        out.effective_size = sum_w * sum_w / sum_w2;

        let Some((c_level, c_slope)) = solve_two_rows(&gram, q) else {
            return false;
        };
        for (w, s) in out.raw.iter().zip(&keep) {
            let mut lv = c_level[0];
            let mut sl = c_slope[0];
            for k in 0..p {
                let zk = self.cols[k][*s] - point[k];
                lv += c_level[k + 1] * zk;
                sl += c_slope[k + 1] * zk;
            }
            out.index.push(self.order[*s]);
            out.level.push(w * lv);
            out.slope.push(w * sl);
        }
        true
    }

    pub fn fit(&self, point: &[f64]) -> Option<EquivalentKernel> {
        let mut out = EquivalentKernel::default();
        self.fit_into(point, &mut out).then_some(out)
    }
}

/// Rows 0 and 1 of the inverse of a symmetric `q×q` matrix (q ≤ 6), via
/// Gaussian elimination with partial pivoting.
fn solve_two_rows(gram: &[f64; 36], q: usize) -> Option<([f64; 6], [f64; 6])> {
    let mut a = [[0.0f64; 8]; 6];
    let scale = (0..q).map(|i| gram[i * q + i].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    for i in 0..q {
        for j in 0..q {
            a[i][j] = gram[i * q + j];
        }
        a[i][q] = if i == 0 { 1.0 } else { 0.0 };
        a[i][q + 1] = if i == 1 { 1.0 } else { 0.0 };
    }
    for col in 0..q {
        let pivot = (col..q).max_by(|x, y| a[*x][col].abs().total_cmp(&a[*y][col].abs()))?;
        // Relative to the diagonal scale of the column.
        let diag = gram[col * q + col].abs().max(f64::MIN_POSITIVE);
        if a[pivot][col].abs() <= 1e-10 * diag.min(scale) {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..q {
            if row != col {
                let factor = a[row][col] / a[col][col];
                if factor != 0.0 {
                    for k in col..q + 2 {
                        a[row][k] -= factor * a[col][k];
                    }
                }
            }
        }
    }
    let mut r0 = [0.0; 6];
    let mut r1 = [0.0; 6];
    for i in 0..q {
        // Symmetric inverse: column i of A^{-1} = row i.
        r0[i] = a[i][q] / a[i][i];
        r1[i] = a[i][q + 1] / a[i][i];
    }
    r0.iter().chain(r1.iter()).all(|v| v.is_finite()).then_some((r0, r1))
}

/// Product Gaussian kernel density with derivative in the first coordinate.
#[derive(Debug, Clone)]
pub struct ProductKde {
    cols: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    cutoff: f64,
}

/// Density value and its derivative in the first coordinate.
#[derive(Debug, Clone, Copy)]
pub struct DensityWithSlope {
    pub density: f64,
    pub slope: f64,
}

impl ProductKde {
    pub fn new(columns: &[&[f64]], bandwidths: Vec<f64>) -> Result<Self> {
        if columns.is_empty() || columns.len() != bandwidths.len() {
            return Err(MpeError::config("product KDE needs one bandwidth per coordinate"));
        }
        let n = columns[0].len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| columns[0][*a].total_cmp(&columns[0][*b]));
        let cols = columns
            .iter()
            .map(|c| order.iter().map(|i| c[*i]).collect())
            .collect();
        Ok(ProductKde {
            cols,
            bandwidths,
            cutoff: GAUSS_CUTOFF,
        })
    }

    pub fn without_window(mut self) -> Self {
        self.cutoff = f64::INFINITY;
        self
    }

    /// Unnormalized kernel sums `(Σw, Σ∂_1 w, log scale)`.
    fn sums(&self, point: &[f64]) -> (f64, f64, f64) {
        let p = self.cols.len();
        let first = &self.cols[0];
        let h0 = self.bandwidths[0];
        let (lo, hi) = if self.cutoff.is_finite() {
            let reach = self.cutoff * h0;
            (
                first.partition_point(|v| *v < point[0] - reach),
                first.partition_point(|v| *v <= point[0] + reach),
            )
        } else {
            (0, first.len())
        };
        let cut2 = self.cutoff * self.cutoff;
        let mut exps = Vec::with_capacity(hi.saturating_sub(lo));
        'rows: for s in lo..hi {
            let mut e = 0.0;
            for k in 0..p {
                let u = (point[k] - self.cols[k][s]) / self.bandwidths[k];
                if k > 0 && u * u > cut2 {
                    continue 'rows;
                }
                e += u * u;
            }
            exps.push((e, (point[0] - first[s]) / h0));
        }
        let shift = exps.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        if !shift.is_finite() {
            return (0.0, 0.0, 0.0);
        }
        let mut dens = 0.0;
        let mut slope = 0.0;
        for (e, u0) in &exps {
            let w = (-0.5 * (e - shift)).exp();
            dens += w;
            slope -= u0 * w / h0;
        }
        (dens, slope, -0.5 * shift)
    }

    pub fn eval(&self, point: &[f64]) -> DensityWithSlope {
        let (dens, slope, log_scale) = self.sums(point);
        let norm: f64 = self.bandwidths.iter().map(|h| INV_SQRT_2PI / h).product::<f64>()
            / self.cols[0].len() as f64;
        let scale = norm * log_scale.exp();
        DensityWithSlope {
            density: dens * scale,
            slope: slope * scale,
        }
    }

    /// `∂_1 f̂ / f̂`, stable far from the data.
    pub fn log_slope(&self, point: &[f64]) -> Option<f64> {
        let (dens, slope, _) = self.sums(point);
        (dens > 0.0).then(|| slope / dens)
    }
}

/// Outcome-sorted sample for Nadaraya–Watson regression on `Y` alone.
#[derive(Debug, Clone)]
pub struct OutcomeSmoother {
    y: Vec<f64>,
    g: Vec<f64>,
    bandwidth: f64,
}

/// Kernel density of `Y` and the Nadaraya–Watson mean of `g` given `Y = y`.
#[derive(Debug, Clone, Copy)]
pub struct KernelMoments {
    pub density: f64,
    pub conditional_mean: f64,
}

impl OutcomeSmoother {
    pub fn new(y: &[f64], g: &[f64], bandwidth: f64) -> Result<Self> {
        if y.len() != g.len() || y.len() < 2 {
            return Err(MpeError::config("outcome smoother needs matching columns"));
        }
        let mut pairs: Vec<(f64, f64)> = y.iter().copied().zip(g.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (y, g) = pairs.into_iter().unzip();
        Ok(OutcomeSmoother { y, g, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, at: f64) -> KernelMoments {
        let h = self.bandwidth;
        let reach = GAUSS_CUTOFF * h;
        let lo = self.y.partition_point(|v| *v < at - reach);
        let hi = self.y.partition_point(|v| *v <= at + reach);
        let mut sw = 0.0;
        let mut swg = 0.0;
        for s in lo..hi {
            let u = (self.y[s] - at) / h;
            let w = (-0.5 * u * u).exp();
            sw += w;
            swg += w * self.g[s];
        }
        KernelMoments {
            density: sw * INV_SQRT_2PI / (h * self.y.len() as f64),
            conditional_mean: if sw > 0.0 { swg / sw } else { f64::NAN },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn local_linear_reproduces_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = d.iter().zip(&x).map(|(a, b)| 2.0 + 3.0 * a - 0.5 * b).collect();
        let ll = LocalLinear::new(&[&d, &x], vec![0.4, 0.5]).unwrap();
        let fit = ll.fit(&[0.2, -0.3]).unwrap();
        assert_abs_diff_eq!(fit.level_of(|j| y[j]), 2.0 + 0.6 + 0.15, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.slope_of(|j| y[j]), 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.level.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.slope.iter().sum::<f64>(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_design_is_reported() {
        let d = vec![1.0; 50];
        let ll = LocalLinear::new(&[&d], vec![0.3]).unwrap();
        assert!(ll.fit(&[1.0]).is_none());
        assert!(ll.fit(&[40.0]).is_none());
    }

    #[test]
    fn product_kde_slope_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
        let kde = ProductKde::new(&[&d, &x], vec![0.3, 0.4]).unwrap();
        let at = [0.4, 0.1];
        let eps = 1e-5;
        let up = kde.eval(&[at[0] + eps, at[1]]).density;
        let down = kde.eval(&[at[0] - eps, at[1]]).density;
        assert_abs_diff_eq!(kde.eval(&at).slope, (up - down) / (2.0 * eps), epsilon = 1e-7);
        let unwindowed = kde.clone().without_window();
        assert_abs_diff_eq!(
            unwindowed.eval(&at).density,
            kde.eval(&at).density,
            epsilon = 1e-10
        );
        assert!(unwindowed.log_slope(&[30.0, 0.0]).unwrap() < 0.0);
    }

    #[test]
    fn product_kde_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        let kde = ProductKde::new(&[&d, &x], vec![0.3, 0.2]).unwrap();
        let step = 0.02;
        let mut mass = 0.0;
        for i in 0..800 {
            for j in 0..800 {
                let p = [-8.0 + step * (i as f64 + 0.5), -8.0 + step * (j as f64 + 0.5)];
                mass += kde.eval(&p).density * step * step;
            }
        }
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn outcome_smoother_recovers_linear_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g: Vec<f64> = y.iter().map(|v| 1.0 + 0.5 * v).collect();
        let sm = OutcomeSmoother::new(&y, &g, 0.1).unwrap();
        let m = sm.eval(0.3);
        assert_abs_diff_eq!(m.conditional_mean, 1.15, epsilon = 1e-2);
        assert!((m.density - 0.381).abs() < 0.02);
    }
}
