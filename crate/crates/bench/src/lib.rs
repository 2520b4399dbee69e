//! Seeded fixtures shared by the benchmarks.

use idmr_core::encoder::EncoderParams;
use idmr_core::index::{build_index, EmbeddingStore};
use idmr_core::trainer::Batch;
use idmr_core::EmbeddingVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            EmbeddingVector::normalize(v).expect("non-degenerate")
        })
        .collect()
}

pub fn random_store(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
    build_index(&unit_vectors(n, dim, seed), (0..n).map(|i| format!("c{i}")).collect()).expect("valid store")
}

pub fn random_batch(n: usize, image_dim: usize, text_dim: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let queries = (0..n).map(|_| (v(image_dim), v(text_dim))).collect();
    let positives = (0..n).map(|_| v(image_dim)).collect();
    Batch::new(queries, positives).expect("matched lengths")
}

pub fn random_params(image_dim: usize, text_dim: usize, hidden: usize, embed: usize, seed: u64) -> EncoderParams {
    EncoderParams::init(image_dim, text_dim, hidden, embed, &mut ChaCha8Rng::seed_from_u64(seed))
}
