use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oralscreen_core::stats::{fisher_exact, ContingencyTable, TailMode};
use std::hint::black_box;

fn fisher(c: &mut Criterion) {
    let mut group = c.benchmark_group("fisher_exact");
    // grid-sized tables, then progressively larger cohorts
    for (a, b, cc, d) in [(14, 16, 56, 198), (140, 160, 560, 1980), (1400, 1600, 5600, 19800)] {
        let table = ContingencyTable::new(a, b, cc, d).unwrap();
        for tail in TailMode::ALL {
            group.bench_with_input(BenchmarkId::new(tail.name(), table.total()), &table, |bench, t| {
                bench.iter(|| fisher_exact(black_box(t), tail).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, fisher);
criterion_main!(benches);
