//! Round-trip properties of the on-disk formats.

use idmr_core::encoder::checkpoint::{decode_checkpoint, encode_checkpoint};
use idmr_core::encoder::EncoderParams;
use idmr_core::index::{build_index, decode_store, encode_store};
use idmr_core::{BBox, EmbeddingVector, ImageRef, QueryImageMode, RetrievalTask, SubTask};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image_ref() -> impl Strategy<Value = ImageRef> {
    let name = "[a-z0-9/_.-]{1,12}";
    let features = proptest::option::of(proptest::collection::vec(-1e6..1e6f64, 1..6));
    prop_oneof![
        (name, features.clone()).prop_map(|(image, features)| ImageRef::Full { image, features }),
        (name, 0.0..500.0f64, 0.0..500.0f64, 0.01..500.0f64, 0.01..500.0f64, features)
            .prop_map(|(image, x, y, w, h, features)| ImageRef::Crop { image, bbox: BBox::new(x, y, w, h), features }),
        name.prop_map(|patch| ImageRef::Patch { patch }),
    ]
}

proptest! {
    #[test]
    fn store_bytes_round_trip(seed in any::<u64>(), n in 1usize..30, dim in 1usize..12, id in "\\PC{0,8}") {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embs: Vec<EmbeddingVector> = (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                v[0] += 2.0;
                EmbeddingVector::normalize(v).unwrap()
            })
            .collect();
        let ids = (0..n).map(|i| format!("{id}#{i}")).collect();
        let store = build_index(&embs, ids).unwrap();
        let bytes = encode_store(&store);
        let back = decode_store(&bytes).unwrap();
        prop_assert_eq!(&back, &store);
        prop_assert_eq!(encode_store(&back), bytes);
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), dims in (1usize..8, 0usize..8, 1usize..8, 1usize..8)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = EncoderParams::init(dims.0, dims.1, dims.2, dims.3, &mut rng);
        let bytes = encode_checkpoint(&p);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back), bytes.clone());
        prop_assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn image_refs_and_tasks_round_trip(q in image_ref(), pool in proptest::collection::vec(image_ref(), 1..5), text in "\\PC{0,20}") {
        let task = RetrievalTask {
            query_image: q,
            query_text: text,
            target_index: pool.len() - 1,
            pool,
            subtask: SubTask::Location,
            query_image_mode: QueryImageMode::Full,
        };
        let json = serde_json::to_string(&task).unwrap();
        let back: RetrievalTask = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, task);
    }
}
