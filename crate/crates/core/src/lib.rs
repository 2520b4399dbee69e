//! Instruction-conditioned multimodal retrieval: triplet synthesis,
//! contrastive encoder training, exact top-k retrieval and benchmarking.

pub mod bbox;
pub mod encoder;
pub mod error;
pub mod evalbench;
pub mod hashing;
pub mod index;
pub mod jsonl;
pub mod manifest;
pub mod raster;
pub mod synth;
pub mod synthworld;
pub mod trainer;
pub mod types;

pub use bbox::BBox;
pub use encoder::{Encoder, EncoderParams};
pub use error::{Error, Result};
pub use index::{build_index, retrieve, search_topk, EmbeddingStore, Hit};
pub use types::*;
