//! Retrieval task construction.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchConfig, Frame, LocationPool, SequenceDataset};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::jsonl::read_jsonl;
use crate::synth::caption::{CaptionProvider, CaptionRequest};
use crate::synth::templates::{instance_query, location_query};
use crate::types::{ImageRef, QueryImageMode, RetrievalTask, SubTask};

const POOL_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// `n` indices at equal intervals over `0..seq_len`, both ends included:
/// `⌊i·(seq_len−1)/(n−1)⌋`.
pub fn sample_frames(seq_len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Validation("cannot sample zero frames".into()));
    }
    if seq_len < n {
        return Err(Error::Validation(format!(
            "sequence of {seq_len} frames is shorter than the {n} requested"
        )));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    Ok((0..n).map(|i| i * (seq_len - 1) / (n - 1)).collect())
}

/// A location task that could not be built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedTask {
    pub object_id: String,
    pub query_frame: usize,
    pub reason: String,
}

/// The sampled frames of one sequence and, for each, the sampled frame
/// serving as its positive.
struct Pairing {
    sequence: usize,
    frames: Vec<usize>,
    positive_of: Vec<usize>,
}

/// Uniform random permutation of `0..n` with no fixed points.
fn derangement(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}

/// Positives are assigned as a seeded derangement of each object's sampled
/// frames: every query gets a frame other than itself, and every sampled
/// frame is used as a positive exactly once.
fn pair_frames(dataset: &SequenceDataset, config: &BenchConfig) -> Result<Vec<Pairing>> {
    config.validate()?;
    dataset.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    dataset
        .sequences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let frames = sample_frames(s.frames.len(), config.frames_per_object).map_err(|e| {
                Error::Validation(format!("{}/{}: {e}", s.category, s.object_id))
            })?;
            let positive_of = derangement(frames.len(), &mut rng);
            Ok(Pairing { sequence: i, frames, positive_of })
        })
        .collect()
}

fn frame_at<'a>(dataset: &'a SequenceDataset, p: &Pairing, k: usize) -> &'a Frame {
    &dataset.sequences[p.sequence].frames[p.frames[k]]
}

/// One task per sampled frame. The pool is every sampled frame of the
/// query's category, so other objects of the same class act as hard
/// negatives.
pub fn build_instance_tasks(dataset: &SequenceDataset, config: &BenchConfig) -> Result<Vec<RetrievalTask>> {
    let pairings = pair_frames(dataset, config)?;

    let mut by_category: BTreeMap<&str, Vec<&Pairing>> = BTreeMap::new();
    for p in &pairings {
        by_category
            .entry(dataset.sequences[p.sequence].category.as_str())
            .or_default()
            .push(p);
    }
    for (cat, members) in &by_category {
        if members.len() < 2 {
            warn!("category {cat:?} has a single object; its instance pool has no other-object negatives");
        }
    }

    let mut tasks = Vec::with_capacity(pairings.len() * config.frames_per_object);
    for p in &pairings {
        let seq = &dataset.sequences[p.sequence];
        let members = &by_category[seq.category.as_str()];
        // (sequence, sampled slot) for every pool entry, in dataset order
        let slots: Vec<(&Pairing, usize)> = members
            .iter()
            .flat_map(|m| (0..m.frames.len()).map(move |k| (*m, k)))
            .collect();
        let pool: Vec<ImageRef> = slots.iter().map(|&(m, k)| frame_at(dataset, m, k).full_ref()).collect();
        let query_text = instance_query(&seq.category)?;
        for q in 0..p.frames.len() {
            let pos = p.positive_of[q];
            let target_index = slots
                .iter()
                .position(|&(m, k)| m.sequence == p.sequence && k == pos)
                .expect("positive is in its category pool");
            tasks.push(RetrievalTask {
                query_image: frame_at(dataset, p, q).query_ref(config.query_image_mode),
                query_text: query_text.clone(),
                pool: pool.clone(),
                target_index,
                subtask: SubTask::Instance,
                query_image_mode: config.query_image_mode,
            });
        }
    }
    Ok(tasks)
}

/// Same query/positive pairing as the instance tasks, with the location
/// template wrapped around the positive frame's caption and a pool drawn
/// from the whole dataset. Tasks whose caption is unavailable are skipped
/// and reported.
pub fn build_location_tasks(
    dataset: &SequenceDataset,
    captions: &dyn CaptionProvider,
    config: &BenchConfig,
) -> Result<(Vec<RetrievalTask>, Vec<SkippedTask>)> {
    let pairings = pair_frames(dataset, config)?;
    let all: Vec<(&Pairing, usize)> = pairings
        .iter()
        .flat_map(|p| (0..p.frames.len()).map(move |k| (p, k)))
        .collect();
    let all_refs: Vec<ImageRef> = all.iter().map(|&(p, k)| frame_at(dataset, p, k).full_ref()).collect();
    let offsets: Vec<usize> = pairings
        .iter()
        .scan(0, |acc, p| {
            let start = *acc;
            *acc += p.frames.len();
            Some(start)
        })
        .collect();

    let pool_size = match config.location_pool {
        LocationPool::All => all.len(),
        LocationPool::Sampled(n) => {
            if n > all.len() {
                warn!("requested pool of {n} exceeds the {} sampled frames; using all", all.len());
            }
            n.min(all.len())
        }
    };
    let mut pool_rng = ChaCha8Rng::seed_from_u64(config.seed ^ POOL_SEED_SALT);

    let mut tasks = Vec::with_capacity(all.len());
    let mut skipped = Vec::new();
    for (pi, p) in pairings.iter().enumerate() {
        let seq = &dataset.sequences[p.sequence];
        for q in 0..p.frames.len() {
            let pos = p.positive_of[q];
            let positive = frame_at(dataset, p, pos);
            let request = CaptionRequest {
                image_id: &positive.image,
                bbox: &positive.bbox,
                category_name: &seq.category,
            };
            let text = captions.caption(&request).and_then(|c| location_query(&c));
            let query_text = match text {
                Ok(t) => t,
                Err(e) => {
                    warn!("skipping location task for {} frame {}: {e}", seq.object_id, p.frames[q]);
                    skipped.push(SkippedTask {
                        object_id: seq.object_id.clone(),
                        query_frame: p.frames[q],
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let global_pos = offsets[pi] + pos;
            let (pool, target_index) = if pool_size == all.len() {
                (all_refs.clone(), global_pos)
            } else {
                let mut picked: Vec<usize> = sample(&mut pool_rng, all.len() - 1, pool_size - 1)
                    .into_iter()
                    .map(|i| if i >= global_pos { i + 1 } else { i })
                    .collect();
                picked.push(global_pos);
                picked.sort_unstable();
                let target = picked.binary_search(&global_pos).expect("positive was inserted");
                (picked.iter().map(|&i| all_refs[i].clone()).collect(), target)
            };
            tasks.push(RetrievalTask {
                query_image: frame_at(dataset, p, q).query_ref(config.query_image_mode),
                query_text,
                pool,
                target_index,
                subtask: SubTask::Location,
                query_image_mode: config.query_image_mode,
            });
        }
    }
    Ok((tasks, skipped))
}

/// A hand-curated query/positive pair with its location caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuratedPair {
    pub query_image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_bbox: Option<BBox>,
    pub positive_image: String,
    pub caption: String,
    pub class: String,
}

pub fn read_curated_pairs(path: &Path) -> Result<Vec<CuratedPair>> {
    read_jsonl(path)
}

/// Location tasks from curated pairs; the pool is the set of all positive
/// images in first-appearance order. A query without a box falls back to
/// the full image.
pub fn build_curated_tasks(pairs: &[CuratedPair], mode: QueryImageMode) -> Result<Vec<RetrievalTask>> {
    if pairs.is_empty() {
        return Err(Error::Validation("no curated pairs".into()));
    }
    let mut pool: Vec<ImageRef> = Vec::new();
    let mut index_of = std::collections::HashMap::new();
    for p in pairs {
        index_of.entry(p.positive_image.clone()).or_insert_with(|| {
            pool.push(ImageRef::full(p.positive_image.clone()));
            pool.len() - 1
        });
    }
    pairs
        .iter()
        .map(|p| {
            let query_image = match (mode, p.query_bbox) {
                (QueryImageMode::Crop, Some(bbox)) => {
                    bbox.validate()?;
                    ImageRef::Crop { image: p.query_image.clone(), bbox, features: None }
                }
                _ => ImageRef::full(p.query_image.clone()),
            };
            Ok(RetrievalTask {
                query_image,
                query_text: location_query(&p.caption)?,
                pool: pool.clone(),
                target_index: index_of[&p.positive_image],
                subtask: SubTask::Location,
                query_image_mode: mode,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::Sequence;
    use crate::synth::caption::{FileProvider, TemplateProvider};
    use crate::synth::sidecar::SidecarKey;
    use crate::synth::templates::LOCATION_INSTRUCTION;
    use proptest::prelude::*;
    use std::collections::HashSet;

    pub(crate) fn fixture(categories: usize, objects: usize, frames: usize) -> SequenceDataset {
        let mut sequences = Vec::new();
        for c in 0..categories {
            for o in 0..objects {
                sequences.push(Sequence {
                    category: format!("cat{c}"),
                    object_id: format!("cat{c}-{o}"),
                    frames: (0..frames)
                        .map(|f| Frame {
                            image: format!("cat{c}-{o}/{f:04}.jpg"),
                            bbox: BBox::new(f as f64, 1.0, 10.0, 12.0),
                            features: None,
                        })
                        .collect(),
                });
            }
        }
        SequenceDataset::new(sequences).unwrap()
    }

    #[test]
    fn equal_interval_sampling() {
        assert_eq!(sample_frames(5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_frames(100, 5).unwrap(), vec![0, 24, 49, 74, 99]);
        assert_eq!(sample_frames(9, 5).unwrap(), vec![0, 2, 4, 6, 8]);
        assert_eq!(sample_frames(7, 1).unwrap(), vec![0]);
        assert!(sample_frames(4, 5).is_err());
        assert!(sample_frames(4, 0).is_err());
    }

    #[test]
    fn lasot_shape_counts() {
        let ds = fixture(70, 4, 12);
        let cfg = BenchConfig::default();
        let inst = build_instance_tasks(&ds, &cfg).unwrap();
        assert_eq!(inst.len(), 1400);
        assert!(inst.iter().all(|t| t.pool.len() == 20 && t.validate().is_ok()));
        let (loc, skipped) = build_location_tasks(&ds, &TemplateProvider, &cfg).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(loc.len(), 1400);
        assert!(loc.iter().all(|t| t.pool.len() == 1400));

        let sampled = BenchConfig { location_pool: LocationPool::Sampled(1000), ..cfg };
        let (loc, _) = build_location_tasks(&ds, &TemplateProvider, &sampled).unwrap();
        for (t, full) in loc.iter().zip(&inst) {
            assert_eq!(t.pool.len(), 1000);
            t.validate().unwrap();
            assert_eq!(t.target().key(), full.target().key(), "same pairing as instance tasks");
        }
    }

    #[test]
    fn smallest_fixture() {
        let ds = fixture(1, 2, 2);
        let tasks = build_instance_tasks(&ds, &BenchConfig { frames_per_object: 2, ..Default::default() }).unwrap();
        assert_eq!(tasks.len(), 4);
        assert!(tasks.iter().all(|t| t.pool.len() == 4));
    }

    #[test]
    fn positive_is_other_frame_of_same_object() {
        let ds = fixture(3, 4, 9);
        let tasks = build_instance_tasks(&ds, &BenchConfig { seed: 11, ..Default::default() }).unwrap();
        for t in &tasks {
            let q = t.query_image.source_image().unwrap();
            let p = t.target().source_image().unwrap();
            assert_ne!(q, p);
            assert_eq!(q.split('/').next(), p.split('/').next());
            assert!(t.query_text.contains(q.split('-').next().unwrap()));
            assert!(matches!(t.query_image, ImageRef::Crop { .. }));
        }
        // every sampled frame is used as a positive exactly once
        let positives: HashSet<String> = tasks.iter().map(|t| t.target().key()).collect();
        assert_eq!(positives.len(), tasks.len());
    }

    #[test]
    fn full_mode_queries_whole_frame() {
        let ds = fixture(2, 2, 5);
        let cfg = BenchConfig { query_image_mode: QueryImageMode::Full, ..Default::default() };
        let tasks = build_instance_tasks(&ds, &cfg).unwrap();
        assert!(tasks.iter().all(|t| matches!(t.query_image, ImageRef::Full { .. })));
    }

    #[test]
    fn location_text_and_missing_captions() {
        let ds = fixture(2, 2, 5);
        let cfg = BenchConfig::default();
        let (tasks, _) = build_location_tasks(&ds, &TemplateProvider, &cfg).unwrap();
        assert!(tasks.iter().all(|t| t.query_text.starts_with(LOCATION_INSTRUCTION)));

        // captions only for the first object's frames
        let s = &ds.sequences[0];
        let provider = FileProvider::from_entries(
            s.frames.iter().map(|f| (SidecarKey::new(&f.image, &f.bbox), format!("{} on a table", f.image))),
        );
        let (tasks, skipped) = build_location_tasks(&ds, &provider, &cfg).unwrap();
        assert_eq!(tasks.len(), 5);
        assert_eq!(skipped.len(), 15);
        for t in &tasks {
            assert!(t.query_text.ends_with(&format!("{} on a table", t.target().source_image().unwrap())));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = fixture(5, 4, 7);
        let cfg = BenchConfig { location_pool: LocationPool::Sampled(30), seed: 3, ..Default::default() };
        let a = build_location_tasks(&ds, &TemplateProvider, &cfg).unwrap();
        let b = build_location_tasks(&ds, &TemplateProvider, &cfg).unwrap();
        assert_eq!(a, b);
        let c = build_location_tasks(&ds, &TemplateProvider, &BenchConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn short_sequence_is_an_error() {
        let ds = fixture(1, 2, 3);
        assert!(build_instance_tasks(&ds, &BenchConfig::default()).is_err());
    }

    #[test]
    fn curated_pairs() {
        let pairs: Vec<CuratedPair> = [
            r#"{"query_image":"q1.jpg","query_bbox":[0,0,5,5],"positive_image":"p1.jpg","caption":"The mug is by the sink.","class":"mug"}"#,
            r#"{"query_image":"q2.jpg","positive_image":"p2.jpg","caption":"The knife is on the board.","class":"knife"}"#,
            r#"{"query_image":"q3.jpg","positive_image":"p1.jpg","caption":"The pan is on the hob.","class":"pan"}"#,
        ]
        .iter()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
        let tasks = build_curated_tasks(&pairs, QueryImageMode::Crop).unwrap();
        assert_eq!(tasks.len(), 3);
        assert!(tasks.iter().all(|t| t.pool.len() == 2 && t.validate().is_ok()));
        assert_eq!(tasks[2].target_index, 0);
        assert!(matches!(tasks[0].query_image, ImageRef::Crop { .. }));
        assert!(matches!(tasks[1].query_image, ImageRef::Full { .. }));
        assert!(build_curated_tasks(&[], QueryImageMode::Crop).is_err());
    }

    proptest! {
        #[test]
        fn counts_follow_shape(cats in 1usize..5, objs in 1usize..5, n in 2usize..6, extra in 0usize..4, seed in any::<u64>()) {
            let ds = fixture(cats, objs, n + extra);
            let cfg = BenchConfig { frames_per_object: n, seed, ..Default::default() };
            let tasks = build_instance_tasks(&ds, &cfg).unwrap();
            prop_assert_eq!(tasks.len(), cats * objs * n);
            for t in &tasks {
                prop_assert_eq!(t.pool.len(), objs * n);
                prop_assert!(t.validate().is_ok());
                prop_assert_ne!(t.query_image.source_image(), t.target().source_image());
            }
            let pool = LocationPool::Sampled(1 + (seed % (cats * objs * n) as u64) as usize);
            let (loc, _) = build_location_tasks(&ds, &TemplateProvider, &BenchConfig { location_pool: pool, ..cfg }).unwrap();
            for (l, i) in loc.iter().zip(&tasks) {
                prop_assert!(l.validate().is_ok());
                prop_assert_eq!(l.target().key(), i.target().key());
            }
        }
    }
}
