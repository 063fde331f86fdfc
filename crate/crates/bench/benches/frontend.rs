use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fbvo_bench::noisy_scenario;
use fbvo_core::features::{circular_match, detect_features, DetectorConfig, MatchConfig};
use fbvo_core::synth::RENDERED_DETECTION_THRESHOLD;

fn bench_frontend(c: &mut Criterion) {
    let s = noisy_scenario(2);
    let (l0, r0) = s.render_stereo(0);
    let (l1, r1) = s.render_stereo(1);
    let det = DetectorConfig {
        threshold: RENDERED_DETECTION_THRESHOLD,
        ..Default::default()
    };
    let mut group = c.benchmark_group("frontend");
    group.sample_size(20);
    group.bench_function("detect_features", |b| b.iter(|| detect_features(black_box(&l0), &det)));
    let f = [&l0, &r0, &l1, &r1].map(|img| detect_features(img, &det));
    let cfg = MatchConfig::default();
    group.bench_function("circular_match", |b| {
        b.iter(|| circular_match(black_box(&f[0]), &f[1], &f[2], &f[3], &cfg))
    });
    group.finish();
}

criterion_group!(benches, bench_frontend);
criterion_main!(benches);
