use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use or_bench::golden;
use or_core::tower::{gibbs_measure, tower_eigenvalue, TowerSpec};
use or_core::ulam::{build_ulam, leading_eigenpair};
use std::hint::black_box;

fn ulam(c: &mut Criterion) {
    let sys = golden();
    let mut g = c.benchmark_group("ulam");
    for res in [64usize, 512, 4096] {
        g.bench_with_input(BenchmarkId::new("build", res), &res, |b, &res| b.iter(|| build_ulam(black_box(&sys), res).unwrap()));
        let op = build_ulam(&sys, res).unwrap();
        g.bench_with_input(BenchmarkId::new("eigenpair", res), &op, |b, op| {
            b.iter(|| leading_eigenpair(black_box(op), 1e-12, 100_000).unwrap())
        });
    }
    g.finish();
}

fn tower(c: &mut Criterion) {
    let t = TowerSpec::golden_mean();
    c.bench_function("tower_eigenvalue", |b| b.iter(|| tower_eigenvalue(black_box(&t), 1e-15).unwrap()));
    let r = tower_eigenvalue(&t, 1e-15).unwrap();
    c.bench_function("gibbs_depth_8", |b| b.iter(|| gibbs_measure(black_box(&t), r, 8).unwrap()));
}

criterion_group!(benches, ulam, tower);
criterion_main!(benches);
