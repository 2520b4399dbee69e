//! Benchmark construction from object sequences, and retrieval scoring.

pub mod metrics;
pub mod tasks;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::types::{ImageRef, QueryImageMode};

pub use metrics::{
    evaluate, evaluate_with, metrics_from_ranks, EncoderScorer, Evaluation, RandomScorer, RankRecord,
    TaskScorer,
};
pub use tasks::{
    build_curated_tasks, build_instance_tasks, build_location_tasks, sample_frames, CuratedPair,
    SkippedTask,
};

/// Precomputed features for a frame, used instead of decoding pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFeatures {
    pub full: Vec<f64>,
    pub crop: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub image: String,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FrameFeatures>,
}

impl Frame {
    pub fn full_ref(&self) -> ImageRef {
        ImageRef::Full {
            image: self.image.clone(),
            features: self.features.as_ref().map(|f| f.full.clone()),
        }
    }

    pub fn crop_ref(&self) -> ImageRef {
        ImageRef::Crop {
            image: self.image.clone(),
            bbox: self.bbox,
            features: self.features.as_ref().map(|f| f.crop.clone()),
        }
    }

    pub fn query_ref(&self, mode: QueryImageMode) -> ImageRef {
        match mode {
            QueryImageMode::Crop => self.crop_ref(),
            QueryImageMode::Full => self.full_ref(),
        }
    }
}

/// One tracked object: its category and the frames it appears in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sequence {
    pub category: String,
    pub object_id: String,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceDataset {
    pub sequences: Vec<Sequence>,
}

impl SequenceDataset {
    pub fn new(sequences: Vec<Sequence>) -> Result<Self> {
        let ds = SequenceDataset { sequences };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.sequences {
            if s.frames.is_empty() {
                return Err(Error::Validation(format!(
                    "sequence {}/{} has no frames",
                    s.category, s.object_id
                )));
            }
            if !seen.insert((s.category.as_str(), s.object_id.as_str())) {
                return Err(Error::Validation(format!(
                    "duplicate sequence {}/{}",
                    s.category, s.object_id
                )));
            }
            for f in &s.frames {
                f.bbox.validate()?;
            }
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.frames.len()).sum()
    }
}

pub fn read_sequences(path: &Path) -> Result<SequenceDataset> {
    let sequences = read_jsonl(path)?;
    SequenceDataset::new(sequences)
}

pub fn write_sequences(path: &Path, dataset: &SequenceDataset) -> Result<()> {
    write_jsonl(path, &dataset.sequences).map(|_| ())
}

/// Candidate pool for location tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocationPool {
    /// Every sampled frame in the dataset.
    #[default]
    All,
    /// A seeded subset of this many frames that always holds the positive.
    Sampled(usize),
}

impl std::str::FromStr for LocationPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(LocationPool::All);
        }
        let n = s
            .strip_prefix("sampled:")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Validation(format!("pool must be `all` or `sampled:N`, got {s:?}")))?;
        Ok(LocationPool::Sampled(n))
    }
}

impl fmt::Display for LocationPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocationPool::All => f.write_str("all"),
            LocationPool::Sampled(n) => write!(f, "sampled:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub frames_per_object: usize,
    pub location_pool: LocationPool,
    pub query_image_mode: QueryImageMode,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            frames_per_object: 5,
            location_pool: LocationPool::All,
            query_image_mode: QueryImageMode::Crop,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames_per_object < 2 {
            return Err(Error::Config(format!(
                "frames_per_object must be at least 2 so a distinct positive exists, got {}",
                self.frames_per_object
            )));
        }
        Ok(())
    }
}
