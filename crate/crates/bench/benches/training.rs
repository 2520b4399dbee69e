use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use idmr_bench::{random_batch, random_params};
use idmr_core::trainer::{full_batch_step, gradcache_step, infonce_with_grads};

fn steps(c: &mut Criterion) {
    let params = random_params(32, 128, 64, 32, 0);
    let batch = random_batch(32, 32, 128, 1);
    let mut group = c.benchmark_group("step_b32");
    group.bench_function("full_batch", |b| b.iter(|| full_batch_step(&params, &batch, 0.05).unwrap()));
    for chunk in [1usize, 8, 32] {
        group.bench_with_input(BenchmarkId::new("gradcache", chunk), &chunk, |b, &chunk| {
            b.iter(|| gradcache_step(&params, &batch, chunk, 0.05).unwrap())
        });
    }
    group.finish();
}

fn loss(c: &mut Criterion) {
    let batch = random_batch(256, 32, 0, 2);
    let q: Vec<&[f64]> = batch.queries.iter().map(|(i, _)| i.as_slice()).collect();
    let p: Vec<&[f64]> = batch.positives.iter().map(|v| v.as_slice()).collect();
    c.bench_function("infonce_with_grads_256x32", |b| b.iter(|| infonce_with_grads(&q, &p, 0.05).unwrap()));
}

criterion_group!(benches, steps, loss);
criterion_main!(benches);
