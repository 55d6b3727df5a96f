use criterion::{criterion_group, criterion_main, Criterion};
use oralscreen_bench::score_fixtures;
use oralscreen_core::segmetrics::{evaluate, iou, pooled_roc, pr_curve};
use std::hint::black_box;

fn metrics(c: &mut Criterion) {
    let (preds, truths) = score_fixtures(16, 7);
    let hard: Vec<_> = preds.iter().map(|p| p.threshold(0.5)).collect();
    c.bench_function("metrics/iou_frame", |b| {
        b.iter(|| iou(black_box(&hard[0]), black_box(&truths[0])).unwrap())
    });
    c.bench_function("metrics/pooled_roc_16_frames", |b| {
        b.iter(|| pooled_roc(black_box(&preds), black_box(&truths)).unwrap())
    });
    c.bench_function("metrics/pr_curve_16_frames", |b| {
        b.iter(|| pr_curve(black_box(&preds), black_box(&truths)).unwrap())
    });
    c.bench_function("metrics/evaluate_16_frames", |b| {
        b.iter(|| evaluate(black_box(&preds), black_box(&truths), 0.5).unwrap())
    });
}

criterion_group!(benches, metrics);
criterion_main!(benches);
