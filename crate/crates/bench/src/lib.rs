//! Seeded fixtures shared by the benchmarks.

use oralscreen_core::segmetrics::{BinaryMask, ProbabilityMap};
use oralscreen_core::{FRAME_HEIGHT, FRAME_WIDTH};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `n` frame-sized (score map, truth) pairs: each truth is a disc, and the
/// scores are noisy around it so curves have many distinct thresholds.
pub fn score_fixtures(n: usize, seed: u64) -> (Vec<ProbabilityMap>, Vec<BinaryMask>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut preds = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for _ in 0..n {
        let cx = rng.random_range(80..FRAME_WIDTH - 80) as i64;
        let cy = rng.random_range(80..FRAME_HEIGHT - 80) as i64;
        let r = rng.random_range(10..70i64);
        let truth = BinaryMask::from_fn(FRAME_WIDTH, FRAME_HEIGHT, |x, y| {
            (x as i64 - cx).pow(2) + (y as i64 - cy).pow(2) <= r * r
        });
        let scores = truth
            .bits()
            .iter()
            .map(|&t| {
                let base: f32 = if t { 0.65 } else { 0.35 };
                // quantized so thresholds repeat across pixels like real model output
                ((base + rng.random_range(-0.3..0.3f32)).clamp(0.0, 1.0) * 255.0).round() / 255.0
            })
            .collect();
        preds.push(ProbabilityMap::new(FRAME_WIDTH, FRAME_HEIGHT, scores).expect("frame-sized"));
        truths.push(truth);
    }
    (preds, truths)
}
