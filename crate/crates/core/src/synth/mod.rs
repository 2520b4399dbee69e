//! Training-triplet synthesis from detection annotations.
//!
//! Stages, in order: crop each annotated instance, score it against its
//! class prompt, drop instances scoring below the threshold, cap every
//! category at a fixed count, caption the survivors and emit one
//! `(crop, location query, full image)` triplet per instance.

pub mod caption;
pub mod coco;
pub mod scorer;
pub mod sidecar;
pub mod templates;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::manifest::write_manifest;
use crate::raster::{crop_region, ImageRoot, Raster};
use crate::types::{DetectionRecord, ImageRef, Split, TrainingTriplet};

pub use caption::{CaptionProvider, CaptionRequest, FileProvider, TemplateProvider};
pub use scorer::{ConstantScorer, FileScorer, ScoreInput, Scorer, SyntheticScorer};
pub use templates::{build_query_text, candidate_text, QueryMode, QueryText};

pub const DEFAULT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_CLASS_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub record: DetectionRecord,
    pub score: f64,
    pub area_ratio: f64,
}

/// A record dropped by some stage, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub image_id: String,
    pub bbox: BBox,
    pub reason: String,
}

impl Skipped {
    fn new(record: &DetectionRecord, reason: impl Into<String>) -> Self {
        Skipped {
            image_id: record.image_id.clone(),
            bbox: record.bbox,
            reason: reason.into(),
        }
    }
}

/// Scores every record; output is index-aligned with `records`. A record
/// whose image cannot be decoded gets an error entry and the rest continue.
/// Each distinct image is decoded once.
pub fn score_instances(
    records: &[DetectionRecord],
    scorer: &dyn Scorer,
    images: &ImageRoot,
) -> Vec<Result<ScoredRecord>> {
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let g = *group_of.entry(r.image_path.as_str()).or_insert_with(|| {
            groups.push((r.image_path.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(i);
    }

    let scored: Vec<Vec<(usize, Result<ScoredRecord>)>> = groups
        .par_iter()
        .map(|(path, members)| {
            let raster = scorer.needs_pixels().then(|| images.open(path));
            members
                .iter()
                .map(|&i| {
                    let r = &records[i];
                    let res = match &raster {
                        Some(Err(e)) => Err(Error::Format(format!("cannot decode {path}: {e}"))),
                        Some(Ok(img)) => score_one(r, scorer, Some(img)),
                        None => score_one(r, scorer, None),
                    };
                    (i, res)
                })
                .collect()
        })
        .collect();

    let mut out: Vec<Option<Result<ScoredRecord>>> = (0..records.len()).map(|_| None).collect();
    for (i, res) in scored.into_iter().flatten() {
        out[i] = Some(res);
    }
    out.into_iter().map(|r| r.expect("every record scored")).collect()
}

fn score_one(
    record: &DetectionRecord,
    scorer: &dyn Scorer,
    image: Option<&Raster>,
) -> Result<ScoredRecord> {
    let area_ratio = record.area_ratio()?;
    let patch = image.map(|img| crop_region(img, &record.bbox)).transpose()?;
    let score = scorer.score(&ScoreInput {
        record,
        patch: patch.as_ref(),
        area_ratio,
    })?;
    if !score.is_finite() {
        return Err(Error::Numeric(format!(
            "scorer returned {score} for image {} box {}",
            record.image_id, record.bbox
        )));
    }
    Ok(ScoredRecord {
        record: record.clone(),
        score,
        area_ratio,
    })
}

/// Keeps records with `score >= threshold`, in input order.
pub fn filter_by_score(scored: Vec<ScoredRecord>, threshold: f64) -> Vec<ScoredRecord> {
    scored.into_iter().filter(|s| s.score >= threshold).collect()
}

/// Caps every category at `cap` records. Over-full categories keep a seeded
/// uniform sample without replacement; surviving records keep their
/// relative order.
pub fn balance_classes(records: Vec<ScoredRecord>, cap: usize, seed: u64) -> Vec<ScoredRecord> {
    balance_by_key(records, cap, seed, |r| r.record.category_name.as_str())
}

pub fn balance_by_key<T>(items: Vec<T>, cap: usize, seed: u64, key: impl Fn(&T) -> &str) -> Vec<T> {
    assert!(cap >= 1, "class cap must be at least 1");
    let mut by_key: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_key.entry(key(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; items.len()];
    for members in by_key.values() {
        if members.len() <= cap {
            members.iter().for_each(|&i| keep[i] = true);
        } else {
            for j in sample(&mut rng, members.len(), cap) {
                keep[members[j]] = true;
            }
        }
    }
    items
        .into_iter()
        .zip(keep)
        .filter_map(|(item, k)| k.then_some(item))
        .collect()
}

/// Seeded uniform subset of at most `limit` items, order preserved.
pub fn sample_limit<T>(items: Vec<T>, limit: usize, seed: u64) -> Vec<T> {
    if items.len() <= limit {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, items.len(), limit).into_vec();
    picked.sort_unstable();
    let mut keep = vec![false; items.len()];
    picked.into_iter().for_each(|i| keep[i] = true);
    items
        .into_iter()
        .zip(keep)
        .filter_map(|(item, k)| k.then_some(item))
        .collect()
}

/// Ten equal-width bins over `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: Option<f64>,
}

impl AreaHistogram {
    pub const BINS: usize = 10;

    pub fn from_ratios(ratios: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0usize; Self::BINS];
        let (mut sum, mut n) = (0.0, 0usize);
        for r in ratios {
            let bin = ((r * Self::BINS as f64).floor() as usize).min(Self::BINS - 1);
            counts[bin] += 1;
            sum += r;
            n += 1;
        }
        AreaHistogram {
            edges: (0..=Self::BINS).map(|i| i as f64 / Self::BINS as f64).collect(),
            counts,
            mean: (n > 0).then(|| sum / n as f64),
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestStats {
    pub count: usize,
    pub per_category: BTreeMap<String, usize>,
    pub area_ratio_histogram: AreaHistogram,
    pub skipped: Vec<Skipped>,
}

/// Captions each record and assembles its triplet. Records the caption
/// provider cannot handle are returned as skipped, never silently dropped.
pub fn build_triplets(
    records: &[ScoredRecord],
    captions: &dyn CaptionProvider,
    source: &str,
) -> (Vec<(TrainingTriplet, f64)>, Vec<Skipped>) {
    let built: Vec<std::result::Result<(TrainingTriplet, f64), Skipped>> = records
        .par_iter()
        .map(|s| {
            let r = &s.record;
            let caption = captions
                .caption(&CaptionRequest::from(r))
                .map_err(|e| Skipped::new(r, format!("caption: {e}")))?;
            let query_text = templates::location_query(&caption)
                .map_err(|e| Skipped::new(r, format!("query text: {e}")))?;
            Ok((
                TrainingTriplet {
                    query_image: r.crop_ref(),
                    query_text,
                    positive_image: ImageRef::full(r.image_path.clone()),
                    category_name: r.category_name.clone(),
                    source: source.to_string(),
                    caption,
                },
                s.area_ratio,
            ))
        })
        .collect();

    let mut triplets = Vec::with_capacity(built.len());
    let mut skipped = Vec::new();
    for b in built {
        match b {
            Ok(t) => triplets.push(t),
            Err(s) => {
                log::warn!("skipping {} {}: {}", s.image_id, s.bbox, s.reason);
                skipped.push(s);
            }
        }
    }
    (triplets, skipped)
}

/// Writes one manifest line per captionable record to `out_path`.
pub fn emit_triplets(
    records: &[ScoredRecord],
    captions: &dyn CaptionProvider,
    source: &str,
    out_path: &Path,
) -> Result<ManifestStats> {
    let (built, skipped) = build_triplets(records, captions, source);
    let triplets: Vec<TrainingTriplet> = built.iter().map(|(t, _)| t.clone()).collect();
    write_manifest(out_path, &triplets)?;
    let mut per_category = BTreeMap::new();
    for t in &triplets {
        *per_category.entry(t.category_name.clone()).or_insert(0) += 1;
    }
    Ok(ManifestStats {
        count: triplets.len(),
        per_category,
        area_ratio_histogram: AreaHistogram::from_ratios(built.iter().map(|(_, a)| *a)),
        skipped,
    })
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub split: Split,
    pub threshold: f64,
    pub cap: usize,
    /// Uniformly subsample the balanced set to this many records.
    pub limit: Option<usize>,
    pub seed: u64,
    /// Dataset tag written to every triplet's `source` field.
    pub source: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            split: Split::Train,
            threshold: DEFAULT_THRESHOLD,
            cap: DEFAULT_CLASS_CAP,
            limit: None,
            seed: 0,
            source: "coco".into(),
        }
    }
}

/// Stats summary for one synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthReport {
    pub split: Split,
    pub threshold: f64,
    pub cap: usize,
    pub input_records: usize,
    pub scored: usize,
    pub score_errors: Vec<Skipped>,
    pub kept_after_filter: usize,
    pub kept_after_balance: usize,
    pub sampled: usize,
    pub pre_filter_area: AreaHistogram,
    pub post_filter_area: AreaHistogram,
    pub manifest: ManifestStats,
}

/// Runs the whole pipeline on the records of one split and writes the
/// manifest to `out_path`.
pub fn synthesize_split(
    annotations: &[DetectionRecord],
    config: &SynthConfig,
    scorer: &dyn Scorer,
    captions: &dyn CaptionProvider,
    images: &ImageRoot,
    out_path: &Path,
) -> Result<SynthReport> {
    if config.cap == 0 {
        return Err(Error::Config("class cap must be at least 1".into()));
    }
    if !config.threshold.is_finite() {
        return Err(Error::Config("threshold must be finite".into()));
    }
    let records: Vec<DetectionRecord> = annotations
        .iter()
        .filter(|r| r.split == config.split)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "no annotations in split {:?}",
            config.split
        )));
    }

    let mut scored = Vec::with_capacity(records.len());
    let mut score_errors = Vec::new();
    for (r, res) in records.iter().zip(score_instances(&records, scorer, images)) {
        match res {
            Ok(s) => scored.push(s),
            Err(e) => {
                log::warn!("cannot score {} {}: {e}", r.image_id, r.bbox);
                score_errors.push(Skipped::new(r, e.to_string()));
            }
        }
    }
    let pre_filter_area = AreaHistogram::from_ratios(scored.iter().map(|s| s.area_ratio));
    let n_scored = scored.len();

    let filtered = filter_by_score(scored, config.threshold);
    let post_filter_area = AreaHistogram::from_ratios(filtered.iter().map(|s| s.area_ratio));
    let kept_after_filter = filtered.len();

    let balanced = balance_classes(filtered, config.cap, config.seed);
    let kept_after_balance = balanced.len();

    let sampled = match config.limit {
        Some(limit) => sample_limit(balanced, limit, config.seed.wrapping_add(1)),
        None => balanced,
    };

    let manifest = emit_triplets(&sampled, captions, &config.source, out_path)?;
    Ok(SynthReport {
        split: config.split,
        threshold: config.threshold,
        cap: config.cap,
        input_records: records.len(),
        scored: n_scored,
        score_errors,
        kept_after_filter,
        kept_after_balance,
        sampled: sampled.len(),
        pre_filter_area,
        post_filter_area,
        manifest,
    })
}
