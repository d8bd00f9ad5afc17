//! Shared fixtures for the benchmarks under `benches/`.

use std::collections::BTreeMap;

use mpe_core::{dgp::preset, Dataset, EmpiricalDistribution};

/// Observables of a named preset at its default parameters.
pub fn dataset(name: &str, n: usize, seed: u64) -> Dataset {
    preset(name, &BTreeMap::new())
        .and_then(|d| d.simulate(n, seed))
        .and_then(|s| s.to_dataset())
        .expect("preset simulates")
}

/// Outcome distribution of a named preset.
pub fn outcomes(name: &str, n: usize, seed: u64) -> EmpiricalDistribution {
    EmpiricalDistribution::new(dataset(name, n, seed).y().to_vec()).expect("finite outcomes")
}
