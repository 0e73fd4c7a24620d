use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hwlab::bounds::steady_upper_tail_with;
use hwlab::dist::{DistSpec, HWScaling};
use hwlab::gauss::{build_grid, sup_samples};
use hwlab::par::Policy;
use hwlab::renewal::{variance_function_with, ArithmeticGrid};
use hwlab::rng::{experiment, StreamKey};

fn policies() -> Vec<(&'static str, Policy)> {
    vec![
        ("sequential", Policy::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Policy::Parallel),
    ]
}

fn upper_tail(c: &mut Criterion) {
    let e = DistSpec::exponential(1.0).unwrap();
    let sc = HWScaling::new(100, 1.0).unwrap();
    let key = StreamKey::new(1, experiment::UPPER_WALK, 0);
    let mut group = c.benchmark_group("steady_upper_tail");
    group.sample_size(10);
    for (name, policy) in policies() {
        group.bench_function(name, |b| {
            b.iter(|| steady_upper_tail_with(policy, &e, &e, &sc, black_box(&[0.5, 1.0]), 500, 5.0, key).unwrap())
        });
    }
    group.finish();
}

fn variance(c: &mut Criterion) {
    let s = DistSpec::erlang(2, 2.0).unwrap();
    let times = ArithmeticGrid::covering(0.5, 20.0).unwrap().times();
    let key = StreamKey::new(1, experiment::VARIANCE, 0);
    let mut group = c.benchmark_group("variance_function");
    group.sample_size(10);
    for (name, policy) in policies() {
        group.bench_function(name, |b| {
            b.iter(|| variance_function_with(policy, &s, black_box(&times), 10_000, key).unwrap())
        });
    }
    group.finish();
}

fn gaussian_sup(c: &mut Criterion) {
    let e = DistSpec::exponential(1.0).unwrap();
    let grid = ArithmeticGrid::covering(0.05, 20.0).unwrap();
    let key = StreamKey::new(1, experiment::GAUSS, 0);
    let g = build_grid(1.0, &e, 1.0, 1.0, grid, 0, key).unwrap();
    let mut group = c.benchmark_group("gauss_sup_samples");
    group.sample_size(10);
    for (name, policy) in policies() {
        group.bench_function(name, |b| b.iter(|| sup_samples(policy, black_box(&g), 8192, &[1], key).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, upper_tail, variance, gaussian_sup);
criterion_main!(benches);
