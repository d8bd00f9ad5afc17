use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpe_bench::{dataset, outcomes};
use mpe_core::estimators::{control_variable, gini_mpe, mean_mpe, quantile_mpe_multi};
use mpe_core::functionals::hadamard_apply;
use mpe_core::{DirectionFunction, FirstStageConfig, FunctionalSpec, KernelSpec, Method, PolicySpec};

const TAUS: [f64; 3] = [0.25, 0.5, 0.75];

fn bench_quantile(c: &mut Criterion) {
    let cfg = FirstStageConfig::default();
    let mut group = c.benchmark_group("quantile_mpe");
    group.sample_size(10);
    for n in [1000, 4000] {
        let data = dataset("linear_exogenous", n, 1);
        for method in [Method::Plugin, Method::Reweight, Method::Debiased] {
            group.bench_with_input(BenchmarkId::new(method.to_string(), n), &data, |b, data| {
                b.iter(|| quantile_mpe_multi(black_box(data), &PolicySpec::LocationShift, &TAUS, method, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_mean_gini(c: &mut Criterion) {
    let cfg = FirstStageConfig::default();
    let data = dataset("uniform_identity", 2000, 2);
    let mut group = c.benchmark_group("mean_gini_mpe");
    group.sample_size(10);
    group.bench_function("mean/2000", |b| b.iter(|| mean_mpe(black_box(&data), &PolicySpec::LocationShift, &cfg).unwrap()));
    group.bench_function("gini/2000", |b| b.iter(|| gini_mpe(black_box(&data), &PolicySpec::LocationShift, &cfg).unwrap()));
    group.finish();
}

fn bench_control_variable(c: &mut Criterion) {
    let cfg = FirstStageConfig::default();
    let data = dataset("triangular_normal", 2000, 3);
    let mut group = c.benchmark_group("control_variable");
    group.sample_size(10);
    group.bench_function("fit/2000", |b| b.iter(|| control_variable(black_box(&data), &cfg).unwrap()));
    group.finish();
}

fn bench_hadamard(c: &mut Criterion) {
    let dist = outcomes("uniform_quadratic", 100_000, 4);
    let h = DirectionFunction::from_points(vec![1.0, 4.0], vec![-1.0, -1.0]).unwrap();
    let kde = KernelSpec::gaussian();
    let mut group = c.benchmark_group("hadamard_apply");
    for f in [FunctionalSpec::Quantile { tau: 0.5 }, FunctionalSpec::Mean, FunctionalSpec::Gini] {
        group.bench_function(f.to_string(), |b| b.iter(|| hadamard_apply(&f, black_box(&dist), &kde, &h).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_quantile, bench_mean_gini, bench_control_variable, bench_hadamard);
criterion_main!(benches);
