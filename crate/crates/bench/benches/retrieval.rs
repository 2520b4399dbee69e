use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use idmr_bench::{random_store, unit_vectors};
use idmr_core::evalbench::{evaluate_with, RandomScorer};
use idmr_core::index::{search_topk, search_topk_sharded};
use idmr_core::{ImageRef, QueryImageMode, RetrievalTask, SubTask};

fn topk(c: &mut Criterion) {
    let mut group = c.benchmark_group("search_topk");
    let query = unit_vectors(1, 32, 99).remove(0);
    for n in [1_000usize, 10_000, 100_000] {
        let store = random_store(n, 32, 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("serial", n), &store, |b, s| {
            b.iter(|| search_topk(s, &query, 5).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sharded_8", n), &store, |b, s| {
            b.iter(|| search_topk_sharded(s, &query, 5, 8).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let tasks: Vec<RetrievalTask> = (0..1400)
        .map(|t| RetrievalTask {
            query_image: ImageRef::full(format!("q{t}")),
            query_text: String::new(),
            pool: (0..20).map(|i| ImageRef::full(format!("{t}-{i}"))).collect(),
            target_index: t % 20,
            subtask: SubTask::Instance,
            query_image_mode: QueryImageMode::Crop,
        })
        .collect();
    c.bench_function("evaluate_1400x20_random", |b| {
        b.iter(|| evaluate_with(&tasks, &RandomScorer { seed: 0 }, 5).unwrap())
    });
}

criterion_group!(benches, topk, metrics);
criterion_main!(benches);
