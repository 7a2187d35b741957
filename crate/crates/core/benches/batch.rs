use avse_core::dsp::EnhancerKind;
use avse_core::metrics::{evaluate_corpus, sweep_compression, sweep_networks};
use avse_core::par::Strategy;
use avse_core::scene::SceneParams;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const STRATEGIES: [(&str, Strategy); 2] = [("sequential", Strategy::Sequential), ("parallel", Strategy::Parallel)];

fn corpus(c: &mut Criterion) {
    let params = SceneParams { duration_s: 1.0, ..SceneParams::default() };
    let seeds: Vec<u64> = (0..16).collect();
    let kinds = [EnhancerKind::OracleMask, EnhancerKind::SpectralSubtraction];
    let mut group = c.benchmark_group("evaluate_corpus");
    group.sample_size(10);
    for (name, strategy) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &strategy, |b, &s| {
            b.iter(|| evaluate_corpus(&params, &seeds, &kinds, s).unwrap())
        });
    }
    group.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, strategy) in STRATEGIES {
        group.bench_with_input(BenchmarkId::new("compression", name), &strategy, |b, &s| {
            b.iter(|| sweep_compression(1, s).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("networks", name), &strategy, |b, &s| {
            b.iter(|| sweep_networks(1, s).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, corpus, sweeps);
criterion_main!(benches);
