//! Featurizers and the trainable embedding encoder.

pub mod checkpoint;
pub mod featurize;
pub mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use featurize::{
    featurize_image, featurize_raster, featurize_text, ImageFeaturizer, ImageSource, TextFeaturizer,
};
pub use model::{
    accumulate_embedding_grad, backprop_embedding_grad, encode, encode_multimodal,
    encode_multimodal_cached, EncoderGrads, EncoderParams, ForwardCache,
};

use crate::error::Result;
use crate::types::{EmbeddingVector, ImageRef};

/// Encoder parameters bundled with the featurizers that feed them.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub params: EncoderParams,
    pub text: TextFeaturizer,
    pub images: ImageFeaturizer,
}

impl Encoder {
    pub fn new(params: EncoderParams, images: ImageFeaturizer) -> Self {
        let text = TextFeaturizer::new(params.text_dim);
        Encoder { params, text, images }
    }

    /// Fused query embedding of an image reference and its text.
    pub fn encode_query(&self, image: &ImageRef, text: &str) -> Result<EmbeddingVector> {
        let img = self.images.features(image)?;
        encode_multimodal(&self.params, &img, &self.text.featurize(text))
    }

    /// Image-only candidate embedding; the text slot is zero.
    pub fn encode_candidate(&self, image: &ImageRef) -> Result<EmbeddingVector> {
        let img = self.images.features(image)?;
        encode_multimodal(&self.params, &img, &self.text.zeros())
    }
}
