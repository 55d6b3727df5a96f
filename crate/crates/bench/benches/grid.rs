use criterion::{criterion_group, criterion_main, Criterion};
use oralscreen_core::cooccurrence::{run_grid, run_stratified_grids, CohortFilter, GridOptions, Strata};
use oralscreen_core::model::{BpPrecedence, Condition};
use oralscreen_core::reference_cohort::reference_dataset;
use std::hint::black_box;

fn grid(c: &mut Criterion) {
    let population = reference_dataset().population(BpPrecedence::default());
    let conditions: Vec<Condition> = Condition::all().collect();
    let opts = GridOptions::default();
    c.bench_function("grid/all_conditions", |b| {
        b.iter(|| run_grid(black_box(&population), &conditions, &CohortFilter::all(), &opts).unwrap())
    });
    c.bench_function("grid/stratified_age", |b| {
        b.iter(|| run_stratified_grids(black_box(&population), &conditions, Strata::Age, &opts).unwrap())
    });
    c.bench_function("grid/reference_consensus", |b| {
        let dataset = reference_dataset();
        b.iter(|| black_box(&dataset).subject_mgis())
    });
}

criterion_group!(benches, grid);
criterion_main!(benches);
