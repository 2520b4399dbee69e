//! Instance/prompt similarity scorers used by the filter stage.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hashing::fnv1a64;
use crate::raster::Raster;
use crate::synth::sidecar::{read_sidecar, SidecarKey};
use crate::types::DetectionRecord;

/// Everything a scorer may look at for one instance.
#[derive(Debug, Clone, Copy)]
pub struct ScoreInput<'a> {
    pub record: &'a DetectionRecord,
    /// Cropped instance; `None` when the scorer does not need pixels.
    pub patch: Option<&'a Raster>,
    pub area_ratio: f64,
}

/// Similarity between a cropped instance and the prompt
/// `a photo of a <class name>`. Must be deterministic and finite.
pub trait Scorer: Send + Sync {
    fn score(&self, input: &ScoreInput<'_>) -> Result<f64>;

    fn needs_pixels(&self) -> bool {
        true
    }
}

pub fn prompt_for(class_name: &str) -> String {
    format!("a photo of a {class_name}")
}

/// Returns the same score for every instance.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _: &ScoreInput<'_>) -> Result<f64> {
        Ok(self.0)
    }

    fn needs_pixels(&self) -> bool {
        false
    }
}

/// Looks scores up in a precomputed `image_id<TAB>x,y,w,h<TAB>score` file.
#[derive(Debug, Clone, Default)]
pub struct FileScorer {
    scores: HashMap<SidecarKey, f64>,
}

impl FileScorer {
    pub fn open(path: &Path) -> Result<Self> {
        let raw = read_sidecar(path)?;
        let mut scores = HashMap::with_capacity(raw.len());
        for (k, v) in raw {
            let s: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("{}: bad score {v:?}: {e}", path.display())))?;
            if !s.is_finite() {
                return Err(Error::Format(format!("{}: non-finite score", path.display())));
            }
            scores.insert(k, s);
        }
        Ok(FileScorer { scores })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (SidecarKey, f64)>) -> Self {
        FileScorer {
            scores: entries.into_iter().collect(),
        }
    }
}

impl Scorer for FileScorer {
    fn score(&self, input: &ScoreInput<'_>) -> Result<f64> {
        let r = input.record;
        self.scores
            .get(&SidecarKey::new(&r.image_id, &r.bbox))
            .copied()
            .ok_or_else(|| Error::Missing(format!("no score for image {} box {}", r.image_id, r.bbox)))
    }

    fn needs_pixels(&self) -> bool {
        false
    }
}

/// Deterministic stand-in for an image/text similarity model:
/// `0.5 · class_match + 0.5 · min(1, 4 · area_ratio)`.
///
/// `class_match` is 1 when the patch's mean colour lies within
/// [`SyntheticScorer::COLOR_TOLERANCE`] (per channel, 0..255 scale) of the
/// class's signature colour from [`class_color`], else 0. Unrecognised
/// instances therefore pass a 0.2 threshold only when their area ratio is at
/// least 0.1, which gives the filter its bias towards large objects.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticScorer;

impl SyntheticScorer {
    pub const COLOR_TOLERANCE: f64 = 40.0;

    pub fn class_match(patch: &Raster, class_name: &str) -> bool {
        let mean = patch.mean_rgb(0, 0, patch.width(), patch.height());
        let target = class_color(class_name);
        mean.iter()
            .zip(target)
            .all(|(m, t)| (m * 255.0 - f64::from(t)).abs() <= Self::COLOR_TOLERANCE)
    }

    pub fn score_parts(class_match: bool, area_ratio: f64) -> f64 {
        let m = if class_match { 1.0 } else { 0.0 };
        0.5 * m + 0.5 * (4.0 * area_ratio).min(1.0)
    }
}

impl Scorer for SyntheticScorer {
    fn score(&self, input: &ScoreInput<'_>) -> Result<f64> {
        let patch = input
            .patch
            .ok_or_else(|| Error::Validation("synthetic scorer needs the cropped patch".into()))?;
        if patch.is_empty() {
            return Err(Error::InvalidGeometry("empty patch".into()));
        }
        let matched = Self::class_match(patch, &input.record.category_name);
        Ok(Self::score_parts(matched, input.area_ratio))
    }
}

/// Signature colour assigned to a class name.
pub fn class_color(class_name: &str) -> [u8; 3] {
    let h = fnv1a64(0x5eed, prompt_for(class_name).as_bytes());
    [h as u8, (h >> 8) as u8, (h >> 16) as u8]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;
    use crate::types::Split;

    fn record(class: &str) -> DetectionRecord {
        DetectionRecord {
            image_id: "1".into(),
            image_path: "1.png".into(),
            image_w: 100,
            image_h: 100,
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            category_id: 1,
            category_name: class.into(),
            split: Split::Train,
        }
    }

    #[test]
    fn synthetic_scorer_components() {
        let r = record("dog");
        let matching = Raster::filled(8, 8, class_color("dog"));
        let other = Raster::filled(8, 8, class_color("dog").map(|c| c.wrapping_add(128)));
        let s = SyntheticScorer;
        let hit = s
            .score(&ScoreInput { record: &r, patch: Some(&matching), area_ratio: 0.01 })
            .unwrap();
        assert!((hit - (0.5 + 0.02)).abs() < 1e-12);
        let miss = s
            .score(&ScoreInput { record: &r, patch: Some(&other), area_ratio: 0.01 })
            .unwrap();
        assert!((miss - 0.02).abs() < 1e-12);
        let big = s
            .score(&ScoreInput { record: &r, patch: Some(&other), area_ratio: 0.6 })
            .unwrap();
        assert_eq!(big, 0.5);
        // deterministic
        assert_eq!(
            s.score(&ScoreInput { record: &r, patch: Some(&matching), area_ratio: 0.3 }).unwrap(),
            s.score(&ScoreInput { record: &r, patch: Some(&matching), area_ratio: 0.3 }).unwrap()
        );
    }

    #[test]
    fn file_scorer_lookup() {
        let r = record("cat");
        let s = FileScorer::from_entries([(SidecarKey::new("1", &r.bbox), 0.27)]);
        let input = ScoreInput { record: &r, patch: None, area_ratio: 0.01 };
        assert_eq!(s.score(&input).unwrap(), 0.27);
        let mut other = r.clone();
        other.image_id = "2".into();
        assert!(s
            .score(&ScoreInput { record: &other, patch: None, area_ratio: 0.01 })
            .is_err());
    }
}
