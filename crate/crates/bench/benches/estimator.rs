use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fbvo_bench::noisy_scenario;
use fbvo_core::estimator::{estimate_joint, ransac_estimate, Direction};
use fbvo_core::EstimatorConfig;

fn bench_estimator(c: &mut Criterion) {
    let s = noisy_scenario(2);
    let matches = &s.frames[0].quad_matches;
    let cfg = EstimatorConfig::default();
    let mut group = c.benchmark_group("estimation");
    group.sample_size(30);
    group.bench_function("ransac_forward", |b| {
        b.iter(|| ransac_estimate(&s.rig, black_box(matches), Direction::Forward, &cfg))
    });
    group.bench_function("joint", |b| b.iter(|| estimate_joint(&s.rig, black_box(matches), &cfg)));
    group.finish();
}

criterion_group!(benches, bench_estimator);
criterion_main!(benches);
