//! One-hidden-layer tanh encoder with unit-norm output.
//!
//! `h_raw = W2 · tanh(W1 · x + b1) + b2`, `e = h_raw / ‖h_raw‖₂`, where
//! `x = [image features ‖ text features]`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{l2_norm, EmbeddingVector};

/// Encoder weights. The same shape doubles as a gradient accumulator, see
/// [`EncoderGrads`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub image_dim: usize,
    pub text_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// `hidden × input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `embed × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Parameter gradients, shaped like the parameters.
pub type EncoderGrads = EncoderParams;

/// Intermediate values from one forward pass, enough for exact backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub raw_output: Vec<f64>,
    pub norm: f64,
}

pub const BLOCK_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

impl EncoderParams {
    pub fn zeros(image_dim: usize, text_dim: usize, hidden_dim: usize, embed_dim: usize) -> Self {
        let input = image_dim + text_dim;
        EncoderParams {
            image_dim,
            text_dim,
            hidden_dim,
            embed_dim,
            w1: vec![0.0; hidden_dim * input],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; embed_dim * hidden_dim],
            b2: vec![0.0; embed_dim],
        }
    }

    /// Uniform `(−1/√fan_in, 1/√fan_in)` initialization.
    pub fn init<R: Rng>(
        image_dim: usize,
        text_dim: usize,
        hidden_dim: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(image_dim, text_dim, hidden_dim, embed_dim);
        let b1 = 1.0 / (p.input_dim() as f64).sqrt();
        let b2 = 1.0 / (hidden_dim as f64).sqrt();
        p.w1.iter_mut().for_each(|v| *v = rng.gen_range(-b1..b1));
        p.b1.iter_mut().for_each(|v| *v = rng.gen_range(-b1..b1));
        p.w2.iter_mut().for_each(|v| *v = rng.gen_range(-b2..b2));
        p.b2.iter_mut().for_each(|v| *v = rng.gen_range(-b2..b2));
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.image_dim, self.text_dim, self.hidden_dim, self.embed_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.image_dim + self.text_dim
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.image_dim == other.image_dim
            && self.text_dim == other.text_dim
            && self.hidden_dim == other.hidden_dim
            && self.embed_dim == other.embed_dim
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha · other`, block by block in declaration order.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        assert!(self.same_shape(other), "parameter shape mismatch");
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += alpha * s);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `max |self − reference| / max |reference|`, taken per block, then the
    /// maximum over blocks. Blocks whose reference is exactly zero compare
    /// by absolute difference.
    pub fn relative_difference(&self, reference: &Self) -> f64 {
        assert!(self.same_shape(reference), "parameter shape mismatch");
        self.blocks()
            .iter()
            .zip(reference.blocks())
            .map(|(a, b)| block_relative_difference(a, b))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn block_relative_difference(a: &[f64], reference: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(reference)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Runs the encoder on one input vector.
pub fn encode(
    params: &EncoderParams,
    feature: &[f64],
    want_cache: bool,
) -> Result<(EmbeddingVector, Option<ForwardCache>)> {
    let input_dim = params.input_dim();
    if feature.len() != input_dim {
        return Err(Error::DimensionMismatch {
            expected: input_dim,
            actual: feature.len(),
        });
    }
    let mut pre = params.b1.clone();
    for (j, p) in pre.iter_mut().enumerate() {
        let row = &params.w1[j * input_dim..(j + 1) * input_dim];
        *p += dot(row, feature);
    }
    let hidden: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
    let mut raw = params.b2.clone();
    for (k, r) in raw.iter_mut().enumerate() {
        let row = &params.w2[k * params.hidden_dim..(k + 1) * params.hidden_dim];
        *r += dot(row, &hidden);
    }
    let norm = l2_norm(&raw);
    if !norm.is_finite() {
        return Err(Error::Numeric("non-finite encoder output".into()));
    }
    let embedding = EmbeddingVector::normalize(raw.clone())?;
    let cache = want_cache.then(|| ForwardCache {
        input: feature.to_vec(),
        pre_activation: pre,
        hidden,
        raw_output: raw,
        norm,
    });
    Ok((embedding, cache))
}

/// Encodes `[image_feat ‖ text_feat]`.
pub fn encode_multimodal(
    params: &EncoderParams,
    image_feat: &[f64],
    text_feat: &[f64],
) -> Result<EmbeddingVector> {
    Ok(encode_multimodal_cached(params, image_feat, text_feat, false)?.0)
}

pub fn encode_multimodal_cached(
    params: &EncoderParams,
    image_feat: &[f64],
    text_feat: &[f64],
    want_cache: bool,
) -> Result<(EmbeddingVector, Option<ForwardCache>)> {
    if image_feat.len() != params.image_dim {
        return Err(Error::DimensionMismatch {
            expected: params.image_dim,
            actual: image_feat.len(),
        });
    }
    if text_feat.len() != params.text_dim {
        return Err(Error::DimensionMismatch {
            expected: params.text_dim,
            actual: text_feat.len(),
        });
    }
    let mut x = Vec::with_capacity(params.input_dim());
    x.extend_from_slice(image_feat);
    x.extend_from_slice(text_feat);
    encode(params, &x, want_cache)
}

/// Parameter gradients for upstream gradient `g = ∂L/∂e` at the normalized
/// output of the pass recorded in `cache`.
pub fn backprop_embedding_grad(
    params: &EncoderParams,
    cache: &ForwardCache,
    g: &[f64],
) -> Result<EncoderGrads> {
    let mut grads = params.zeros_like();
    accumulate_embedding_grad(params, cache, g, &mut grads)?;
    Ok(grads)
}

/// Adds the gradients of [`backprop_embedding_grad`] into `grads`.
pub fn accumulate_embedding_grad(
    params: &EncoderParams,
    cache: &ForwardCache,
    g: &[f64],
    grads: &mut EncoderGrads,
) -> Result<()> {
    let (input_dim, hidden_dim, embed_dim) = (params.input_dim(), params.hidden_dim, params.embed_dim);
    if cache.input.len() != input_dim
        || cache.hidden.len() != hidden_dim
        || cache.pre_activation.len() != hidden_dim
        || cache.raw_output.len() != embed_dim
    {
        return Err(Error::Validation("forward cache does not match parameter shapes".into()));
    }
    if g.len() != embed_dim {
        return Err(Error::DimensionMismatch {
            expected: embed_dim,
            actual: g.len(),
        });
    }
    if !grads.same_shape(params) {
        return Err(Error::Validation("gradient accumulator does not match parameters".into()));
    }
    if cache.norm.is_nan() || cache.norm <= 0.0 {
        return Err(Error::DegenerateEmbedding(cache.norm));
    }

    // ∂L/∂h_raw = (I − ê êᵀ) g / ‖h_raw‖
    let n = cache.norm;
    let e_dot_g: f64 = cache.raw_output.iter().zip(g).map(|(h, gk)| h / n * gk).sum();
    let d_raw: Vec<f64> = cache
        .raw_output
        .iter()
        .zip(g)
        .map(|(h, gk)| (gk - h / n * e_dot_g) / n)
        .collect();

    let mut d_hidden = vec![0.0; hidden_dim];
    for (k, &dk) in d_raw.iter().enumerate() {
        grads.b2[k] += dk;
        let w_row = &params.w2[k * hidden_dim..(k + 1) * hidden_dim];
        let g_row = &mut grads.w2[k * hidden_dim..(k + 1) * hidden_dim];
        for j in 0..hidden_dim {
            g_row[j] += dk * cache.hidden[j];
            d_hidden[j] += dk * w_row[j];
        }
    }
    for (j, (&z, &dh)) in cache.hidden.iter().zip(&d_hidden).enumerate() {
        let dj = dh * (1.0 - z * z);
        grads.b1[j] += dj;
        let g_row = &mut grads.w1[j * input_dim..(j + 1) * input_dim];
        for (gi, xi) in g_row.iter_mut().zip(&cache.input) {
            *gi += dj * xi;
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
