//! Nonparametric pairs bootstrap for standard errors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};
use crate::rng::auxiliary_rng;

use super::Dataset;

pub const DEFAULT_BOOTSTRAP_DRAWS: usize = 200;

const BOOTSTRAP_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: Vec<f64>,
    pub sd: f64,
    /// Draws whose estimator returned an error.
    pub failures: usize,
}

/// Resamples rows with replacement `draws` times and applies `estimator`.
pub fn pairs_bootstrap<F>(data: &Dataset, seed: u64, draws: usize, estimator: F) -> Result<BootstrapSummary>
where
    F: Fn(&Dataset) -> Result<f64>,
{
    if draws < 2 {
        return Err(MpeError::config("the bootstrap needs at least 2 draws"));
    }
    let n = data.n();
    let mut rng = auxiliary_rng(seed, BOOTSTRAP_STREAM);
    let mut replicates = Vec::with_capacity(draws);
    let mut failures = 0;
    let mut idx = vec![0usize; n];
    for _ in 0..draws {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        match estimator(&data.select(&idx)) {
            Ok(v) if v.is_finite() => replicates.push(v),
            _ => failures += 1,
        }
    }
    if replicates.len() < 2 {
        return Err(MpeError::estimation("fewer than 2 bootstrap draws succeeded"));
    }
    let m = replicates.len() as f64;
    let mean = replicates.iter().sum::<f64>() / m;
    let sd = (replicates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    Ok(BootstrapSummary { replicates, sd, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_mean_standard_error() {
        let y: Vec<f64> = (0..400).map(|i| (i % 20) as f64).collect();
        let data = Dataset::new(y.clone(), y.clone(), vec![], None).unwrap();
        let mean = |d: &Dataset| Ok(d.y().iter().sum::<f64>() / d.n() as f64);
        let s = pairs_bootstrap(&data, 1, 400, mean).unwrap();
        let sd_y = (y.iter().map(|v| (v - 9.5).powi(2)).sum::<f64>() / 400.0).sqrt();
        let expected = sd_y / 20.0;
        assert!((s.sd - expected).abs() < 0.15 * expected, "{} vs {}", s.sd, expected);
        assert_eq!(s.failures, 0);
        assert_eq!(pairs_bootstrap(&data, 1, 400, mean).unwrap(), s);
    }

    #[test]
    fn failures_are_counted() {
        let y: Vec<f64> = (0..100).map(f64::from).collect();
        let data = Dataset::new(y.clone(), y, vec![], None).unwrap();
        let flaky = |d: &Dataset| {
            if d.y()[0] < 50.0 {
                Err(MpeError::estimation("x"))
            } else {
                Ok(1.0)
            }
        };
        let s = pairs_bootstrap(&data, 3, 50, flaky).unwrap();
        assert!(s.failures > 0 && s.failures < 50);
    }
}
