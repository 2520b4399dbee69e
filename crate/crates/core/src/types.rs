//! Shared value types. All of them are plain data: immutable once built and
//! `Send + Sync`.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bbox::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

/// One annotated object in a detection dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub image_path: String,
    pub image_w: u32,
    pub image_h: u32,
    pub bbox: BBox,
    pub category_id: i64,
    pub category_name: String,
    pub split: Split,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::Validation(format!(
                "image {} has zero dimension {}x{}",
                self.image_id, self.image_w, self.image_h
            )));
        }
        if self.category_name.trim().is_empty() {
            return Err(Error::Validation(format!(
                "record on image {} has an empty category name",
                self.image_id
            )));
        }
        self.bbox
            .validate_within(f64::from(self.image_w), f64::from(self.image_h))
    }

    pub fn area_ratio(&self) -> Result<f64> {
        crate::bbox::area_ratio(&self.bbox, f64::from(self.image_w), f64::from(self.image_h))
    }

    /// The crop reference this record produces in a triplet manifest.
    pub fn crop_ref(&self) -> ImageRef {
        ImageRef::Crop {
            image: self.image_path.clone(),
            bbox: self.bbox,
            features: None,
        }
    }
}

/// Reference to an image, a region of one, or a precomputed feature record.
///
/// JSON forms:
/// - `"path/or/id"` or `{"image": id}`: a whole image
/// - `{"image": id, "bbox": [x, y, w, h]}`: a crop of a source image
/// - `{"patch": path}`: a standalone patch file
/// - any `image` form may carry `"features": [...]`, which then replaces
///   raster decoding
#[derive(Debug, Clone, PartialEq)]
pub enum ImageRef {
    Full {
        image: String,
        features: Option<Vec<f64>>,
    },
    Crop {
        image: String,
        bbox: BBox,
        features: Option<Vec<f64>>,
    },
    Patch {
        patch: String,
    },
}

impl ImageRef {
    pub fn full(image: impl Into<String>) -> Self {
        ImageRef::Full {
            image: image.into(),
            features: None,
        }
    }

    /// The source image of a full or cropped reference.
    pub fn source_image(&self) -> Option<&str> {
        match self {
            ImageRef::Full { image, .. } | ImageRef::Crop { image, .. } => Some(image),
            ImageRef::Patch { .. } => None,
        }
    }

    pub fn features(&self) -> Option<&[f64]> {
        match self {
            ImageRef::Full { features, .. } | ImageRef::Crop { features, .. } => {
                features.as_deref()
            }
            ImageRef::Patch { .. } => None,
        }
    }

    /// Identity key: two refs with equal keys denote the same pixels.
    pub fn key(&self) -> String {
        match self {
            ImageRef::Full { image, .. } => image.clone(),
            ImageRef::Crop { image, bbox, .. } => format!("{image}#{}", bbox.key()),
            ImageRef::Patch { patch } => format!("patch:{patch}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefObject {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RefRepr {
    Id(String),
    Object(RefObject),
}

impl Serialize for ImageRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ImageRef::Full {
                image,
                features: None,
            } => s.serialize_str(image),
            ImageRef::Full { image, features } => RefObject {
                image: Some(image.clone()),
                bbox: None,
                patch: None,
                features: features.clone(),
            }
            .serialize(s),
            ImageRef::Crop {
                image,
                bbox,
                features,
            } => RefObject {
                image: Some(image.clone()),
                bbox: Some(*bbox),
                patch: None,
                features: features.clone(),
            }
            .serialize(s),
            ImageRef::Patch { patch } => RefObject {
                image: None,
                bbox: None,
                patch: Some(patch.clone()),
                features: None,
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ImageRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RefRepr::deserialize(d)? {
            RefRepr::Id(image) => Ok(ImageRef::full(image)),
            RefRepr::Object(o) => match (o.image, o.bbox, o.patch) {
                (Some(image), None, None) => Ok(ImageRef::Full {
                    image,
                    features: o.features,
                }),
                (Some(image), Some(bbox), None) => Ok(ImageRef::Crop {
                    image,
                    bbox,
                    features: o.features,
                }),
                (None, None, Some(patch)) if o.features.is_none() => Ok(ImageRef::Patch { patch }),
                _ => Err(D::Error::custom(
                    "image reference must be {\"image\"[, \"bbox\"]} or {\"patch\"}",
                )),
            },
        }
    }
}

/// One `(query image, query text, positive image)` training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingTriplet {
    pub query_image: ImageRef,
    pub query_text: String,
    pub positive_image: ImageRef,
    pub category_name: String,
    pub source: String,
    pub caption: String,
}

/// An embedding produced by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw values without any normalization claim.
    pub fn raw(values: Vec<f64>) -> Self {
        EmbeddingVector {
            values,
            normalized: false,
        }
    }

    /// Scales `values` to unit length.
    pub fn normalize(mut values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::DegenerateEmbedding(norm));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector {
            values,
            normalized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubTask {
    Instance,
    Location,
}

impl fmt::Display for SubTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubTask::Instance => "instance",
            SubTask::Location => "location",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryImageMode {
    Crop,
    Full,
}

impl std::str::FromStr for QueryImageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crop" => Ok(QueryImageMode::Crop),
            "full" => Ok(QueryImageMode::Full),
            other => Err(Error::Validation(format!("unknown query image mode {other:?}"))),
        }
    }
}

/// One retrieval query with its candidate pool; exactly one pool entry is
/// the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTask {
    pub query_image: ImageRef,
    pub query_text: String,
    pub pool: Vec<ImageRef>,
    pub target_index: usize,
    pub subtask: SubTask,
    pub query_image_mode: QueryImageMode,
}

impl RetrievalTask {
    pub fn validate(&self) -> Result<()> {
        if self.target_index >= self.pool.len() {
            return Err(Error::Validation(format!(
                "target index {} outside pool of {}",
                self.target_index,
                self.pool.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.pool.len());
        for r in &self.pool {
            if !seen.insert(r.key()) {
                return Err(Error::Validation(format!("duplicate pool entry {}", r.key())));
            }
        }
        Ok(())
    }

    pub fn target(&self) -> &ImageRef {
        &self.pool[self.target_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtaskMetrics {
    pub precision_at_1: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub n_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subtasks: BTreeMap<SubTask, SubtaskMetrics>,
    /// Unweighted mean over the subtasks present.
    pub overall: SubtaskMetrics,
}

/// Hyper-parameters for contrastive training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub temperature: f64,
    pub lr0: f64,
    /// Caps the number of optimizer steps; the schedule decays to zero over
    /// `min(total_steps, epochs × ⌈N / batch_size⌉)`.
    pub total_steps: Option<u64>,
    pub batch_size: usize,
    pub chunk_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub text_dim: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            temperature: 0.05,
            lr0: 2e-5,
            total_steps: None,
            batch_size: 32,
            chunk_size: 8,
            epochs: 1,
            seed: 0,
            embed_dim: 32,
            hidden_dim: 64,
            text_dim: crate::encoder::featurize::DEFAULT_TEXT_DIM,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.chunk_size == 0 || self.chunk_size > self.batch_size {
            return Err(Error::Config(format!(
                "chunk_size must be in 1..={}, got {}",
                self.batch_size, self.chunk_size
            )));
        }
        if self.total_steps == Some(0) {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.text_dim == 0 {
            return Err(Error::Config("embedding, hidden and text dims must be positive".into()));
        }
        Ok(())
    }
}
