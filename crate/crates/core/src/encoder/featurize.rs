//! Fixed featurizers feeding the encoder: a colour-grid summary for
//! rasters and signed feature hashing for text.

use crate::bbox::area_ratio;
use crate::error::{Error, Result};
use crate::hashing::fnv1a64;
use crate::raster::{crop_region, ImageRoot, Raster};
use crate::types::ImageRef;

pub const GRID: u32 = 4;
/// 4×4 cells × RGB plus the log area ratio.
pub const RASTER_FEATURE_DIM: usize = (GRID * GRID * 3) as usize + 1;
pub const DEFAULT_TEXT_DIM: usize = 128;
pub const TEXT_HASH_SEED: u64 = 0x1d_3e_2a;

/// Input to [`featurize_image`].
#[derive(Debug, Clone, Copy)]
pub enum ImageSource<'a> {
    /// A decoded patch and the fraction of its source image it covers.
    Raster { patch: &'a Raster, area_ratio: f64 },
    /// A precomputed feature vector, passed through unchanged.
    Stored(&'a [f64]),
}

pub fn featurize_image(source: ImageSource<'_>) -> Result<Vec<f64>> {
    match source {
        ImageSource::Stored(v) => {
            if v.is_empty() {
                return Err(Error::Validation("empty stored feature vector".into()));
            }
            Ok(v.to_vec())
        }
        ImageSource::Raster { patch, area_ratio } => featurize_raster(patch, area_ratio),
    }
}

/// Cell `i` of `n` along an axis of length `len` spans
/// `[⌊i·len/n⌋, ⌊(i+1)·len/n⌋)`, widened to one pixel when the axis is
/// shorter than the grid.
pub fn cell_span(i: u32, n: u32, len: u32) -> (u32, u32) {
    let start = (u64::from(i) * u64::from(len) / u64::from(n)) as u32;
    let end = (u64::from(i + 1) * u64::from(len) / u64::from(n)) as u32;
    let start = start.min(len - 1);
    (start, end.max(start + 1))
}

pub fn featurize_raster(patch: &Raster, area_ratio: f64) -> Result<Vec<f64>> {
    if patch.is_empty() {
        return Err(Error::Validation("cannot featurize an empty raster".into()));
    }
    if !(area_ratio > 0.0 && area_ratio <= 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "area ratio must lie in (0, 1], got {area_ratio}"
        )));
    }
    let mut out = Vec::with_capacity(RASTER_FEATURE_DIM);
    for gy in 0..GRID {
        let (y0, y1) = cell_span(gy, GRID, patch.height());
        for gx in 0..GRID {
            let (x0, x1) = cell_span(gx, GRID, patch.width());
            out.extend_from_slice(&patch.mean_rgb(x0, y0, x1, y1));
        }
    }
    out.push(area_ratio.ln());
    Ok(out)
}

/// Signed feature hashing of whitespace tokens into `dim` buckets,
/// L2-normalized. Token order does not matter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextFeaturizer {
    pub dim: usize,
    pub seed: u64,
}

impl TextFeaturizer {
    pub fn new(dim: usize) -> Self {
        TextFeaturizer {
            dim,
            seed: TEXT_HASH_SEED,
        }
    }

    pub fn featurize(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in text.split_whitespace() {
            let h = fnv1a64(self.seed, token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

pub fn featurize_text(text: &str, dim: usize) -> Vec<f64> {
    TextFeaturizer::new(dim).featurize(text)
}

/// Turns [`ImageRef`]s into image feature vectors, decoding rasters under
/// `root` when no stored features are attached.
#[derive(Debug, Clone, Default)]
pub struct ImageFeaturizer {
    root: ImageRoot,
}

impl ImageFeaturizer {
    pub fn new(root: ImageRoot) -> Self {
        ImageFeaturizer { root }
    }

    pub fn features(&self, r: &ImageRef) -> Result<Vec<f64>> {
        if let Some(f) = r.features() {
            return featurize_image(ImageSource::Stored(f));
        }
        match r {
            ImageRef::Full { image, .. } => {
                let img = self.root.open(image)?;
                featurize_raster(&img, 1.0)
            }
            ImageRef::Crop { image, bbox, .. } => {
                let img = self.root.open(image)?;
                let patch = crop_region(&img, bbox)?;
                let clamped = crate::bbox::clamp_bbox(bbox, f64::from(img.width()), f64::from(img.height()))?;
                let ratio = area_ratio(&clamped, f64::from(img.width()), f64::from(img.height()))?;
                featurize_raster(&patch, ratio)
            }
            ImageRef::Patch { patch } => {
                let img = self.root.open(patch)?;
                featurize_raster(&img, 1.0)
            }
        }
    }
}
