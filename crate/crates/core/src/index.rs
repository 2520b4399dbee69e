//! Exact top-k retrieval over a flat store of unit-norm embeddings.
//!
//! Similarity is the dot product. Rankings are a total order: higher
//! score first, ties broken by lower insertion index.
//!
//! Store file layout (all integers little-endian):
//!
//! ```text
//! b"IDMRSTO1" | u32 version = 1 | u32 dim | u64 count
//! count × dim f32 rows
//! count × (u32 byte length, UTF-8 id)
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::EmbeddingVector;

pub const STORE_MAGIC: &[u8; 8] = b"IDMRSTO1";
pub const STORE_VERSION: u32 = 1;
/// Allowed deviation of a stored row's norm from 1.
pub const ROW_NORM_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    rows: Vec<f32>,
    ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub id: String,
    pub index: usize,
    pub score: f32,
}

impl EmbeddingStore {
    pub fn empty(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            rows: Vec::new(),
            ids: Vec::new(),
        }
    }

    /// Builds a store from single-precision rows, checking shape, norms and
    /// id uniqueness.
    pub fn from_rows(dim: usize, rows: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("store dimension must be positive".into()));
        }
        if rows.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                actual: rows.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate id {id:?}")));
            }
        }
        for (i, row) in rows.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > ROW_NORM_TOLERANCE {
                return Err(Error::Validation(format!("row {i} has norm {norm}, expected 1")));
            }
        }
        Ok(EmbeddingStore { dim, rows, ids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scores(&self, query: &[f32]) -> Vec<f32> {
        self.rows.chunks_exact(self.dim).map(|r| dot_f32(r, query)).collect()
    }
}

/// Store from encoder outputs; row `k` is `embeddings[k]` cast to `f32`.
pub fn build_index(embeddings: &[EmbeddingVector], ids: Vec<String>) -> Result<EmbeddingStore> {
    if embeddings.len() != ids.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            actual: ids.len(),
        });
    }
    let Some(first) = embeddings.first() else {
        return Err(Error::Validation("cannot infer dimension of an empty index; use EmbeddingStore::empty".into()));
    };
    let dim = first.dim();
    let mut rows = Vec::with_capacity(dim * embeddings.len());
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.dim(),
            });
        }
        rows.extend(e.to_f32());
    }
    EmbeddingStore::from_rows(dim, rows, ids)
}

#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ranking order: descending score, then ascending index. NaN sorts last.
pub fn rank_cmp(scores: &[f32], a: usize, b: usize) -> Ordering {
    let key = |i: usize| {
        let s = scores[i];
        if s.is_nan() {
            f32::NEG_INFINITY
        } else {
            s
        }
    };
    // partial_cmp so that 0.0 and -0.0 tie; NaN is already mapped away
    key(b)
        .partial_cmp(&key(a))
        .expect("no NaN after mapping")
        .then(a.cmp(&b))
}

/// Indices of `scores` in ranking order.
pub fn rank_scores(scores: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| rank_cmp(scores, a, b));
    idx
}

/// 1-based rank of `target` under the ranking order, computed by counting
/// the entries that beat it.
pub fn rank_of(scores: &[f32], target: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| j != target && rank_cmp(scores, j, target) == Ordering::Less)
        .count()
}

fn top_indices(scores: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_cmp(scores, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_cmp(scores, a, b));
    idx
}

fn check_query(store: &EmbeddingStore, query: &EmbeddingVector, k: usize) -> Result<Vec<f32>> {
    if store.is_empty() {
        return Err(Error::Validation("search on an empty store".into()));
    }
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if query.dim() != store.dim {
        return Err(Error::DimensionMismatch {
            expected: store.dim,
            actual: query.dim(),
        });
    }
    Ok(query.to_f32())
}

/// The `min(k, len)` best candidates for `query`.
pub fn search_topk(store: &EmbeddingStore, query: &EmbeddingVector, k: usize) -> Result<Vec<Hit>> {
    let q = check_query(store, query, k)?;
    let scores = store.scores(&q);
    Ok(top_indices(&scores, k)
        .into_iter()
        .map(|i| Hit {
            id: store.ids[i].clone(),
            index: i,
            score: scores[i],
        })
        .collect())
}

/// Same result as [`search_topk`], scanning `shards` row ranges in parallel
/// and merging under the ranking order.
pub fn search_topk_sharded(
    store: &EmbeddingStore,
    query: &EmbeddingVector,
    k: usize,
    shards: usize,
) -> Result<Vec<Hit>> {
    let q = check_query(store, query, k)?;
    let n = store.len();
    let per = n.div_ceil(shards.max(1));
    let partial: Vec<Vec<(usize, f32)>> = (0..n)
        .step_by(per)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&start| {
            let end = (start + per).min(n);
            let scores: Vec<f32> = (start..end).map(|i| dot_f32(store.row(i), &q)).collect();
            top_indices(&scores, k)
                .into_iter()
                .map(|j| (start + j, scores[j]))
                .collect()
        })
        .collect();
    let mut merged: Vec<(usize, f32)> = partial.into_iter().flatten().collect();
    let scores_by_pos: Vec<f32> = merged.iter().map(|&(_, s)| s).collect();
    let mut order: Vec<usize> = (0..merged.len()).collect();
    // positions are in ascending row order within and across shards, so
    // position order doubles as insertion order
    merged.sort_by_key(|&(i, _)| i);
    let scores_sorted: Vec<f32> = merged.iter().map(|&(_, s)| s).collect();
    let _ = scores_by_pos;
    order.sort_unstable_by(|&a, &b| rank_cmp(&scores_sorted, a, b));
    Ok(order
        .into_iter()
        .take(k)
        .map(|p| {
            let (i, score) = merged[p];
            Hit {
                id: store.ids[i].clone(),
                index: i,
                score,
            }
        })
        .collect())
}

/// Id of the best candidate.
pub fn retrieve(store: &EmbeddingStore, query: &EmbeddingVector) -> Result<String> {
    Ok(search_topk(store, query, 1)?.remove(0).id)
}

pub fn encode_store(store: &EmbeddingStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + store.rows.len() * 4 + store.ids.iter().map(|s| s.len() + 4).sum::<usize>());
    out.extend_from_slice(STORE_MAGIC);
    out.extend_from_slice(&STORE_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for v in &store.rows {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in &store.ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("store file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_store(bytes: &[u8]) -> Result<EmbeddingStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(&STORE_MAGIC[..]) {
        return Err(Error::Format("not an embedding store (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != STORE_VERSION {
        return Err(Error::Format(format!("unsupported store version {version}")));
    }
    let dim = r.u32()? as usize;
    let count = usize::try_from(r.u64()?).map_err(|_| Error::Format("count overflows".into()))?;
    let n_floats = count
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("row block size overflows".into()))?;
    let raw = r.take(n_floats.checked_mul(4).ok_or_else(|| Error::Format("row block size overflows".into()))?)?;
    let rows: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let s = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Format(format!("id is not UTF-8: {e}")))?;
        ids.push(s.to_string());
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after id table".into()));
    }
    if count == 0 {
        return Ok(EmbeddingStore::empty(dim));
    }
    EmbeddingStore::from_rows(dim, rows, ids).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode_store(store)).map_err(|e| Error::io(path, e))
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_store(&bytes)
}
