use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedmrl::federation::{Federation, Mode};
use fedmrl::fusion::{backward_and_step, forward_loss, init_triple, LearningRates, LossWeights};
use fedmrl::models::ModelConfig;
use fedmrl::numerics::{Matrix, Rng};
use fedmrl_bench::{round_config, workload};
use std::hint::black_box;

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [32, 128] {
        let mut rng = Rng::new(n as u64);
        let a = Matrix::from_fn(n, n, |_, _| rng.normal());
        let b = Matrix::from_fn(n, n, |_, _| rng.normal());
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(a.matmul(&b).unwrap()))
        });
    }
    group.finish();
}

fn fused_step(c: &mut Criterion) {
    let (mut g, mut f, mut p) = init_triple(
        &ModelConfig::new(64, vec![32], 4, 10),
        &ModelConfig::new(64, vec![40], 16, 10),
        0,
    )
    .unwrap();
    let mut rng = Rng::new(1);
    let x = Matrix::from_fn(16, 64, |_, _| rng.normal());
    let y: Vec<usize> = (0..16).map(|_| rng.below(10)).collect();
    c.bench_function("fused_step_batch16", |bench| {
        bench.iter(|| {
            let (_, cache) = forward_loss(&g, &f, &p, &x, &y, LossWeights::default()).unwrap();
            backward_and_step(&mut g, &mut f, &mut p, &cache, LearningRates::uniform(1e-4))
                .unwrap();
        })
    });
}

fn round(c: &mut Criterion) {
    let (ds, plan) = workload(0);
    let mut group = c.benchmark_group("round_10_clients");
    group.sample_size(20);
    for mode in Mode::ALL {
        group.bench_function(mode.as_str(), |bench| {
            bench.iter_batched(
                || Federation::new(round_config(mode), &ds, &plan).unwrap(),
                |mut fed| black_box(fed.step_round().unwrap()),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, fused_step, round);
criterion_main!(benches);
