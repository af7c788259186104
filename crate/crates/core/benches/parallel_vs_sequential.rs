//! Same workloads through the rayon path and the forced-sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sparselab::exec::with_sequential;
use sparselab::kernel::Hilbert;
use sparselab::operator::{apply_fixed_scale, Grid};
use sparselab::polynomial::BiPoly;
use sparselab::random::{rng, step_function};
use sparselab::sparse::{build_stopping_family, maximal_truncation};

fn modes(c: &mut Criterion) {
    let grid = Grid::new(2, 768).unwrap();
    let mut r = rng(1);
    let f = step_function(&grid, &mut r, 4, 0.5);
    let g = step_function(&grid, &mut r, 4, 0.5);
    let p = BiPoly::from_1d(&[(1, 2, 1.0)]);

    let mut group = c.benchmark_group("fixed_scale_k4");
    group.bench_function(BenchmarkId::new("parallel", 768), |b| b.iter(|| apply_fixed_scale(&f, 4, &p).unwrap()));
    group.bench_function(BenchmarkId::new("sequential", 768), |b| {
        b.iter(|| with_sequential(|| apply_fixed_scale(&f, 4, &p).unwrap()))
    });
    group.finish();

    let mut group = c.benchmark_group("maximal_truncation");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", 768), |b| b.iter(|| maximal_truncation(&f, &p, &Hilbert).unwrap()));
    group.bench_function(BenchmarkId::new("sequential", 768), |b| {
        b.iter(|| with_sequential(|| maximal_truncation(&f, &p, &Hilbert).unwrap()))
    });
    group.finish();

    let mut group = c.benchmark_group("stopping_family");
    group.bench_function("parallel", |b| b.iter(|| build_stopping_family(&f, &g, 100.0).unwrap()));
    group.bench_function("sequential", |b| b.iter(|| with_sequential(|| build_stopping_family(&f, &g, 100.0).unwrap())));
    group.finish();
}

criterion_group!(benches, modes);
criterion_main!(benches);
