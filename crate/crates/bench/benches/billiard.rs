use criterion::{criterion_group, criterion_main, Criterion};
use or_core::billiard::{billiard_escape_sweep, collision_map, BilliardHole, BilliardTable};
use or_core::sampling::stream;
use std::hint::black_box;

fn collisions(c: &mut Criterion) {
    let table = BilliardTable::default_table().unwrap();
    let mut rng = stream(3, 0);
    let states: Vec<_> = (0..1024).map(|_| table.sample_srb(&mut rng)).collect();
    c.bench_function("collision_map_1024", |b| {
        b.iter(|| {
            for s in &states {
                let _ = black_box(collision_map(&table, s));
            }
        })
    });
}

fn escape(c: &mut Criterion) {
    let table = BilliardTable::default_table().unwrap();
    let holes = [
        BilliardHole::arc_fraction(&table, 0, 0.1),
        BilliardHole::Disk { center: [0.2, 0.5], radius: 0.08 },
    ];
    let mut g = c.benchmark_group("billiard_escape");
    g.sample_size(10);
    g.bench_function("two_holes_1e5", |b| {
        b.iter(|| billiard_escape_sweep(black_box(&table), &holes, 100_000, 30, 1, None).unwrap())
    });
    g.finish();
}

criterion_group!(benches, collisions, escape);
criterion_main!(benches);
