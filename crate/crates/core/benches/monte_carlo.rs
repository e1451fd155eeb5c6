use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rangenav::harness::{monte_carlo_with, Execution, Scenario};
use rangenav::select::score_anchor;
use rangenav::sim::Anchor;
use rangenav::so3::Vec3;
use rangenav::validate::random_covariance;

fn ensemble(c: &mut Criterion) {
    let mut scenario = Scenario::bundled();
    scenario.duration_s = 2.0;
    let mut group = c.benchmark_group("monte_carlo_8_runs");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| monte_carlo_with(black_box(&scenario), 8, exec).unwrap())
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cov = random_covariance(&mut rng);
    let x = Vec3::new(0.0, 0.5, 2.0);
    let anchors: Vec<Anchor> = (1..=5)
        .map(|id| Anchor::new(id, rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0))
        .collect();
    c.bench_function("score_five_anchors", |b| {
        b.iter(|| {
            anchors
                .iter()
                .map(|a| score_anchor(black_box(&cov), &x, a, 0.01).unwrap().trace_delta)
                .sum::<f64>()
        })
    });
}

criterion_group!(benches, ensemble, scoring);
criterion_main!(benches);
