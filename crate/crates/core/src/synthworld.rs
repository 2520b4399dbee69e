//! A seeded universe of object instances seen in recurring contexts.
//!
//! Every image shows one instance in one context. Its full-frame feature is
//! `instance + context + noise`; the crop of the object is
//! `instance + noise`. Instances come in families of four, which play the
//! role of categories.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::evalbench::{Frame, FrameFeatures, Sequence, SequenceDataset};
use crate::synth::sidecar::format_line;
use crate::synth::templates::location_query;
use crate::types::{ImageRef, TrainingTriplet};

pub const FAMILY_SIZE: usize = 4;
/// Instance vectors are redrawn until every pair has a dot product below this.
pub const MAX_INSTANCE_DOT: f64 = 0.9;
/// Side of the nominal square frame the object boxes live in.
pub const FRAME_SIZE: f64 = 100.0;
pub const SOURCE: &str = "synthworld";
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_instances: usize,
    pub n_contexts: usize,
    pub feature_dim: usize,
    /// The last image of each instance is held out of the training manifest.
    pub images_per_instance: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_instances: 64,
            n_contexts: 8,
            feature_dim: 32,
            images_per_instance: 101,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 || self.n_contexts == 0 || self.images_per_instance == 0 {
            return Err(Error::Config("world counts must all be at least 1".into()));
        }
        if self.feature_dim < 2 {
            return Err(Error::Config(format!("feature_dim must be at least 2, got {}", self.feature_dim)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be non-negative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldImage {
    pub image_id: String,
    pub instance_id: usize,
    pub context_id: usize,
    pub full_feature: Vec<f64>,
    pub crop_feature: Vec<f64>,
    pub caption: String,
    pub area_ratio: f64,
}

impl WorldImage {
    /// A centred square box covering `area_ratio` of the nominal frame.
    pub fn bbox(&self) -> BBox {
        let side = FRAME_SIZE * self.area_ratio.sqrt();
        let off = (FRAME_SIZE - side) / 2.0;
        BBox::new(off, off, side, side)
    }

    pub fn crop_ref(&self) -> ImageRef {
        ImageRef::Crop {
            image: self.image_id.clone(),
            bbox: self.bbox(),
            features: Some(self.crop_feature.clone()),
        }
    }

    pub fn full_ref(&self) -> ImageRef {
        ImageRef::Full {
            image: self.image_id.clone(),
            features: Some(self.full_feature.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub instance_vectors: Vec<Vec<f64>>,
    pub context_vectors: Vec<Vec<f64>>,
    /// Instance-major: all images of instance 0, then instance 1, ...
    pub images: Vec<WorldImage>,
}

pub fn instance_name(i: usize) -> String {
    format!("object-{i}")
}

pub fn context_name(c: usize) -> String {
    format!("context-{c}")
}

pub fn family_name(i: usize) -> String {
    format!("family-{}", i / FAMILY_SIZE)
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gen_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.feature_dim;

    let mut instance_vectors: Vec<Vec<f64>> = Vec::with_capacity(config.n_instances);
    for i in 0..config.n_instances {
        let mut v = unit_vector(d, &mut rng);
        let mut redraws = 0;
        while instance_vectors.iter().any(|u| dot(u, &v) >= MAX_INSTANCE_DOT) {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                warn!("instance {i}: no vector with pairwise dot < {MAX_INSTANCE_DOT} after {MAX_REDRAWS} draws");
                break;
            }
            v = unit_vector(d, &mut rng);
        }
        instance_vectors.push(v);
    }
    let context_vectors: Vec<Vec<f64>> = (0..config.n_contexts).map(|_| unit_vector(d, &mut rng)).collect();

    let noise = Normal::new(0.0, config.noise_sigma)
        .map_err(|e| Error::Config(format!("noise_sigma: {e}")))?;
    let mut images = Vec::with_capacity(config.n_instances * config.images_per_instance);
    for (i, inst) in instance_vectors.iter().enumerate() {
        for j in 0..config.images_per_instance {
            // contexts cycle so every instance meets every context
            let c = (i + j) % config.n_contexts;
            let ctx = &context_vectors[c];
            let full_feature: Vec<f64> = (0..d).map(|k| inst[k] + ctx[k] + noise.sample(&mut rng)).collect();
            let crop_feature: Vec<f64> = (0..d).map(|k| inst[k] + noise.sample(&mut rng)).collect();
            images.push(WorldImage {
                image_id: format!("{}/{j:04}", instance_name(i)),
                instance_id: i,
                context_id: c,
                full_feature,
                crop_feature,
                caption: format!("The {} is in {}.", instance_name(i), context_name(c)),
                area_ratio: rng.gen_range(0.05..0.5),
            });
        }
    }
    Ok(World {
        config: config.clone(),
        instance_vectors,
        context_vectors,
        images,
    })
}

impl World {
    pub fn images_of(&self, instance: usize) -> &[WorldImage] {
        let n = self.config.images_per_instance;
        &self.images[instance * n..(instance + 1) * n]
    }

    pub fn image(&self, image_id: &str) -> Option<&WorldImage> {
        self.images.iter().find(|im| im.image_id == image_id)
    }

    pub fn is_held_out(&self, image: &WorldImage) -> bool {
        image.image_id == self.images_of(image.instance_id).last().expect("non-empty").image_id
    }
}

/// One sequence per instance, with its family as the category.
pub fn as_sequence_dataset(world: &World) -> SequenceDataset {
    let sequences = (0..world.config.n_instances)
        .map(|i| Sequence {
            category: family_name(i),
            object_id: instance_name(i),
            frames: world
                .images_of(i)
                .iter()
                .map(|im| Frame {
                    image: im.image_id.clone(),
                    bbox: im.bbox(),
                    features: Some(FrameFeatures {
                        full: im.full_feature.clone(),
                        crop: im.crop_feature.clone(),
                    }),
                })
                .collect(),
        })
        .collect();
    SequenceDataset { sequences }
}

/// Crop → location query → own full frame, for every image not held out.
pub fn as_training_manifest(world: &World) -> Result<Vec<TrainingTriplet>> {
    world
        .images
        .iter()
        .filter(|im| !world.is_held_out(im))
        .map(|im| {
            Ok(TrainingTriplet {
                query_image: im.crop_ref(),
                query_text: location_query(&im.caption)?,
                positive_image: im.full_ref(),
                category_name: family_name(im.instance_id),
                source: SOURCE.to_string(),
                caption: im.caption.clone(),
            })
        })
        .collect()
}

/// Caption sidecar for every image, keyed by image id and box.
pub fn caption_sidecar(world: &World) -> String {
    let mut out = String::new();
    for im in &world.images {
        let _ = writeln!(out, "{}", format_line(&im.image_id, &im.bbox(), &im.caption));
    }
    out
}

/// Files written by [`write_world`].
pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const CAPTIONS_FILE: &str = "captions.tsv";
pub const CONFIG_FILE: &str = "world.json";

/// Writes the training manifest, sequence dataset, caption sidecar and the
/// generating config into `dir`.
pub fn write_world(world: &World, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::manifest::write_manifest(&dir.join(TRAIN_FILE), &as_training_manifest(world)?)?;
    crate::evalbench::write_sequences(&dir.join(SEQUENCES_FILE), &as_sequence_dataset(world))?;
    let captions = dir.join(CAPTIONS_FILE);
    std::fs::write(&captions, caption_sidecar(world)).map_err(|e| Error::io(&captions, e))?;
    crate::jsonl::write_json(&dir.join(CONFIG_FILE), &world.config)
}
