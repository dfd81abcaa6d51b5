use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lossrate_core::oracle::{cramer_tail, sample_dataset};
use lossrate_core::{
    cumulant_curve, estimate_cumulant, inverse_rate, rate, DiscreteLossDistribution, LambdaGrid,
    LossDataset, DEFAULT_TOLERANCE,
};

fn dataset(n: usize) -> LossDataset {
    let dist =
        DiscreteLossDistribution::new(vec![0.0, 0.2, 0.9, 2.5], vec![0.4, 0.3, 0.2, 0.1]).unwrap();
    sample_dataset(&dist, n, 1).unwrap()
}

fn cumulant(c: &mut Criterion) {
    let mut group = c.benchmark_group("cumulant");
    for n in [1_000, 100_000] {
        let ds = dataset(n);
        group.bench_with_input(BenchmarkId::new("point", n), &ds, |b, ds| {
            b.iter(|| estimate_cumulant(ds, black_box(1.7)).unwrap())
        });
        let grid = LambdaGrid::default();
        group.bench_with_input(BenchmarkId::new("curve64", n), &ds, |b, ds| {
            b.iter(|| cumulant_curve(ds, black_box(&grid)).unwrap())
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let ds = dataset(10_000);
    c.bench_function("rate/10000", |b| {
        b.iter(|| rate(&ds, black_box(0.2), DEFAULT_TOLERANCE).unwrap())
    });
    c.bench_function("inverse_rate/10000", |b| {
        b.iter(|| inverse_rate(&ds, black_box(0.05), DEFAULT_TOLERANCE).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    let coin = DiscreteLossDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
    let mut group = c.benchmark_group("cramer");
    group.sample_size(10);
    group.bench_function("n100_trials100k", |b| {
        b.iter(|| cramer_tail(&coin, 100, 0.2, black_box(100_000), 7).unwrap())
    });
    group.finish();
}

criterion_group!(benches, cumulant, solvers, monte_carlo);
criterion_main!(benches);
