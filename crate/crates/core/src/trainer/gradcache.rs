//! Full-batch contrastive gradients computed chunk by chunk.
//!
//! [`gradcache_step`] never holds more than one chunk of forward caches:
//! it embeds the whole batch without caches, takes the InfoNCE gradient at
//! the embedding level, then re-runs each chunk with caches and pushes the
//! cached embedding gradients through the encoder. The result equals
//! [`full_batch_step`] up to floating-point summation order.

use rayon::prelude::*;

use crate::encoder::model::{
    accumulate_embedding_grad, encode_multimodal_cached, EncoderGrads, EncoderParams,
};
use crate::error::{Error, Result};
use crate::trainer::loss::infonce_with_grads;

type Rows = Vec<Vec<f64>>;

/// Query `i` is `(query_image[i], query_text[i])`; its positive is
/// `positives[i]` and the other positives are its negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub queries: Vec<(Vec<f64>, Vec<f64>)>,
    pub positives: Vec<Vec<f64>>,
}

impl Batch {
    pub fn new(queries: Vec<(Vec<f64>, Vec<f64>)>, positives: Vec<Vec<f64>>) -> Result<Self> {
        if queries.len() != positives.len() {
            return Err(Error::DimensionMismatch {
                expected: queries.len(),
                actual: positives.len(),
            });
        }
        Ok(Batch { queries, positives })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub grads: EncoderGrads,
}

fn check_batch(batch: &Batch, tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    if batch.queries.len() != batch.positives.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.queries.len(),
            actual: batch.positives.len(),
        });
    }
    Ok(())
}

fn zero_text(params: &EncoderParams) -> Vec<f64> {
    vec![0.0; params.text_dim]
}

/// Reference gradient: one cached forward pass over every row, then
/// backprop of queries (row order) followed by positives (row order).
pub fn full_batch_step(params: &EncoderParams, batch: &Batch, tau: f64) -> Result<StepOutput> {
    check_batch(batch, tau)?;
    let zeros = zero_text(params);
    let mut q_emb = Vec::with_capacity(batch.len());
    let mut q_cache = Vec::with_capacity(batch.len());
    for (img, txt) in &batch.queries {
        let (e, c) = encode_multimodal_cached(params, img, txt, true)?;
        q_emb.push(e.into_values());
        q_cache.push(c.expect("cache requested"));
    }
    let mut c_emb = Vec::with_capacity(batch.len());
    let mut c_cache = Vec::with_capacity(batch.len());
    for img in &batch.positives {
        let (e, c) = encode_multimodal_cached(params, img, &zeros, true)?;
        c_emb.push(e.into_values());
        c_cache.push(c.expect("cache requested"));
    }
    let g = infonce_with_grads(&q_emb, &c_emb, tau)?;
    let mut grads = params.zeros_like();
    for (cache, d) in q_cache.iter().zip(&g.d_q) {
        accumulate_embedding_grad(params, cache, d, &mut grads)?;
    }
    for (cache, d) in c_cache.iter().zip(&g.d_c) {
        accumulate_embedding_grad(params, cache, d, &mut grads)?;
    }
    Ok(StepOutput { loss: g.loss, grads })
}

/// Chunked gradient of the full-batch InfoNCE loss.
///
/// Within a chunk, query rows are accumulated before positive rows, each in
/// row order; chunk totals are then summed in ascending chunk order. Chunks
/// run in parallel but the reduction order is fixed.
pub fn gradcache_step(
    params: &EncoderParams,
    batch: &Batch,
    chunk_size: usize,
    tau: f64,
) -> Result<StepOutput> {
    if chunk_size == 0 {
        return Err(Error::Config("chunk_size must be at least 1".into()));
    }
    check_batch(batch, tau)?;
    let zeros = zero_text(params);
    let n = batch.len();
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(chunk_size)
        .map(|s| (s, (s + chunk_size).min(n)))
        .collect();

    // Stage 1: embeddings only.
    let stage1: Vec<(Rows, Rows)> = chunks
        .par_iter()
        .map(|&(s, e)| -> Result<_> {
            let q = batch.queries[s..e]
                .iter()
                .map(|(img, txt)| Ok(encode_multimodal_cached(params, img, txt, false)?.0.into_values()))
                .collect::<Result<Vec<_>>>()?;
            let c = batch.positives[s..e]
                .iter()
                .map(|img| Ok(encode_multimodal_cached(params, img, &zeros, false)?.0.into_values()))
                .collect::<Result<Vec<_>>>()?;
            Ok((q, c))
        })
        .collect::<Result<_>>()?;
    let mut q_emb = Vec::with_capacity(n);
    let mut c_emb = Vec::with_capacity(n);
    for (q, c) in stage1 {
        q_emb.extend(q);
        c_emb.extend(c);
    }

    // Stage 2: loss gradient at the embeddings, over the whole batch.
    let g = infonce_with_grads(&q_emb, &c_emb, tau)?;

    // Stage 3: re-encode each chunk with caches and backprop the cached gradients.
    let partial: Vec<EncoderGrads> = chunks
        .par_iter()
        .map(|&(s, e)| -> Result<EncoderGrads> {
            let mut acc = params.zeros_like();
            for i in s..e {
                let (img, txt) = &batch.queries[i];
                let (_, cache) = encode_multimodal_cached(params, img, txt, true)?;
                accumulate_embedding_grad(params, &cache.expect("cache requested"), &g.d_q[i], &mut acc)?;
            }
            for i in s..e {
                let (_, cache) = encode_multimodal_cached(params, &batch.positives[i], &zeros, true)?;
                accumulate_embedding_grad(params, &cache.expect("cache requested"), &g.d_c[i], &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut grads = params.zeros_like();
    for p in &partial {
        grads.add_scaled(1.0, p);
    }
    Ok(StepOutput { loss: g.loss, grads })
}
