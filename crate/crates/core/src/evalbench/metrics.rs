//! Ranking pools and summarizing ranks as Precision@1 / Recall@k.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::hashing::fnv1a64;
use crate::index::{dot_f32, rank_of};
use crate::types::{EvalReport, RetrievalTask, SubTask, SubtaskMetrics};

/// Scores every pool entry of a task; higher is more similar.
pub trait TaskScorer: Sync {
    fn scores(&self, task_index: usize, task: &RetrievalTask) -> Result<Vec<f32>>;
}

/// Dot products between the fused query embedding and image-only candidate
/// embeddings, in the single precision used by the embedding store.
pub struct EncoderScorer<'a> {
    encoder: &'a Encoder,
    candidates: HashMap<String, std::result::Result<Vec<f32>, String>>,
}

impl<'a> EncoderScorer<'a> {
    /// Encodes every distinct candidate across `tasks` once.
    pub fn new(encoder: &'a Encoder, tasks: &[RetrievalTask]) -> Self {
        let mut unique = HashMap::new();
        for t in tasks {
            for r in &t.pool {
                unique.entry(r.key()).or_insert(r);
            }
        }
        let candidates = unique
            .into_par_iter()
            .map(|(key, r)| {
                let e = encoder.encode_candidate(r).map(|e| e.to_f32()).map_err(|e| e.to_string());
                (key, e)
            })
            .collect();
        EncoderScorer { encoder, candidates }
    }
}

impl TaskScorer for EncoderScorer<'_> {
    fn scores(&self, _: usize, task: &RetrievalTask) -> Result<Vec<f32>> {
        let q = self.encoder.encode_query(&task.query_image, &task.query_text)?.to_f32();
        task.pool
            .iter()
            .map(|r| {
                let key = r.key();
                match self.candidates.get(&key) {
                    Some(Ok(c)) => Ok(dot_f32(c, &q)),
                    Some(Err(e)) => Err(Error::Validation(format!("candidate {key}: {e}"))),
                    None => Err(Error::Missing(format!("candidate {key} was not encoded"))),
                }
            })
            .collect()
    }
}

/// Uniformly random scores: the chance-level baseline.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

impl TaskScorer for RandomScorer {
    fn scores(&self, task_index: usize, task: &RetrievalTask) -> Result<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(self.seed, &(task_index as u64).to_le_bytes()));
        Ok((0..task.pool.len()).map(|_| rng.gen::<f32>()).collect())
    }
}

/// Where one task's target landed. `rank` is 1-based; `None` marks a task
/// that could not be scored and counts as a miss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub task: usize,
    pub subtask: SubTask,
    pub target_index: usize,
    pub pool_size: usize,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub ranks: Vec<RankRecord>,
}

pub fn evaluate(tasks: &[RetrievalTask], encoder: &Encoder, k: usize) -> Result<Evaluation> {
    let scorer = EncoderScorer::new(encoder, tasks);
    evaluate_with(tasks, &scorer, k)
}

/// Ranks each task's pool (descending score, earlier entry wins ties) and
/// records the target's position. Tasks are scored in parallel; records
/// come back in task order.
pub fn evaluate_with(tasks: &[RetrievalTask], scorer: &dyn TaskScorer, k: usize) -> Result<Evaluation> {
    if tasks.is_empty() {
        return Err(Error::Validation("no tasks to evaluate".into()));
    }
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let ranks: Vec<RankRecord> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let rank = t
                .validate()
                .and_then(|_| scorer.scores(i, t))
                .and_then(|s| {
                    if s.len() == t.pool.len() {
                        Ok(rank_of(&s, t.target_index))
                    } else {
                        Err(Error::DimensionMismatch { expected: t.pool.len(), actual: s.len() })
                    }
                });
            let rank = match rank {
                Ok(r) => Some(r),
                Err(e) => {
                    warn!("task {i} counted as a miss: {e}");
                    None
                }
            };
            RankRecord {
                task: i,
                subtask: t.subtask,
                target_index: t.target_index,
                pool_size: t.pool.len(),
                rank,
            }
        })
        .collect();
    Ok(Evaluation { report: metrics_from_ranks(&ranks, k)?, ranks })
}

/// Per-subtask P@1 and R@k, plus their unweighted mean over the subtasks
/// present.
pub fn metrics_from_ranks(ranks: &[RankRecord], k: usize) -> Result<EvalReport> {
    if ranks.is_empty() {
        return Err(Error::Validation("no ranks to summarize".into()));
    }
    let mut counts: BTreeMap<SubTask, (usize, usize, usize)> = BTreeMap::new();
    for r in ranks {
        let c = counts.entry(r.subtask).or_default();
        c.0 += 1;
        c.1 += usize::from(r.rank == Some(1));
        c.2 += usize::from(r.rank.is_some_and(|x| x <= k));
    }
    let subtasks: BTreeMap<SubTask, SubtaskMetrics> = counts
        .into_iter()
        .map(|(s, (n, h1, hk))| {
            (
                s,
                SubtaskMetrics {
                    precision_at_1: h1 as f64 / n as f64,
                    recall_at_k: hk as f64 / n as f64,
                    k,
                    n_tasks: n,
                },
            )
        })
        .collect();
    let m = subtasks.len() as f64;
    let overall = SubtaskMetrics {
        precision_at_1: subtasks.values().map(|s| s.precision_at_1).sum::<f64>() / m,
        recall_at_k: subtasks.values().map(|s| s.recall_at_k).sum::<f64>() / m,
        k,
        n_tasks: ranks.len(),
    };
    Ok(EvalReport { subtasks, overall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderParams, ImageFeaturizer};
    use crate::types::{ImageRef, QueryImageMode};
    use proptest::prelude::*;

    fn task(pool: usize, target: usize, subtask: SubTask) -> RetrievalTask {
        RetrievalTask {
            query_image: ImageRef::full("q"),
            query_text: "t".into(),
            pool: (0..pool).map(|i| ImageRef::full(format!("c{i}"))).collect(),
            target_index: target,
            subtask,
            query_image_mode: QueryImageMode::Crop,
        }
    }

    /// Scores scripted per task.
    struct Scripted(Vec<Vec<f32>>);

    impl TaskScorer for Scripted {
        fn scores(&self, i: usize, _: &RetrievalTask) -> Result<Vec<f32>> {
            self.0.get(i).cloned().ok_or_else(|| Error::Missing(format!("task {i}")))
        }
    }

    /// Scores that put the target at a chosen 1-based rank.
    fn scripted_rank(pool: usize, target: usize, rank: usize) -> Vec<f32> {
        let mut others = (0..pool).filter(|&i| i != target);
        let mut s = vec![0.0; pool];
        for pos in 0..pool {
            let idx = if pos + 1 == rank { target } else { others.next().unwrap() };
            s[idx] = (pool - pos) as f32;
        }
        s
    }

    #[test]
    fn seven_of_ten_at_rank_one() {
        let tasks: Vec<_> = (0..10).map(|i| task(6, i % 6, SubTask::Instance)).collect();
        let scores = (0..10)
            .map(|i| scripted_rank(6, i % 6, if i < 7 { 1 } else { 3 }))
            .collect();
        let ev = evaluate_with(&tasks, &Scripted(scores), 5).unwrap();
        let m = ev.report.subtasks[&SubTask::Instance];
        assert_eq!(m.precision_at_1, 0.7);
        assert_eq!(m.recall_at_k, 1.0);
        assert_eq!(ev.report.overall.precision_at_1, 0.7);
    }

    #[test]
    fn rank_five_counts_for_recall_only() {
        let tasks = vec![task(8, 2, SubTask::Location), task(8, 0, SubTask::Location)];
        let ev = evaluate_with(&tasks, &Scripted(vec![scripted_rank(8, 2, 5), scripted_rank(8, 0, 6)]), 5).unwrap();
        assert_eq!(ev.ranks[0].rank, Some(5));
        let m = ev.report.subtasks[&SubTask::Location];
        assert_eq!((m.precision_at_1, m.recall_at_k), (0.0, 0.5));
    }

    #[test]
    fn ties_resolve_to_earlier_entry() {
        let tasks = vec![task(3, 1, SubTask::Instance), task(3, 0, SubTask::Instance)];
        let ev = evaluate_with(&tasks, &Scripted(vec![vec![1.0, 1.0, 1.0]; 2]), 1).unwrap();
        assert_eq!(ev.ranks[0].rank, Some(2));
        assert_eq!(ev.ranks[1].rank, Some(1));
    }

    #[test]
    fn failures_are_misses() {
        let tasks = vec![task(3, 0, SubTask::Instance), task(3, 0, SubTask::Instance)];
        let ev = evaluate_with(&tasks, &Scripted(vec![vec![3.0, 2.0, 1.0]]), 5).unwrap();
        assert_eq!(ev.ranks[1].rank, None);
        assert_eq!(ev.report.subtasks[&SubTask::Instance].precision_at_1, 0.5);
        assert!(evaluate_with(&[], &RandomScorer { seed: 0 }, 5).is_err());
        assert!(evaluate_with(&tasks, &RandomScorer { seed: 0 }, 0).is_err());
    }

    #[test]
    fn overall_is_macro_mean() {
        let tasks = vec![
            task(2, 0, SubTask::Instance),
            task(2, 0, SubTask::Location),
            task(2, 0, SubTask::Location),
            task(2, 0, SubTask::Location),
        ];
        let hit = vec![1.0, 0.0];
        let miss = vec![0.0, 1.0];
        let ev = evaluate_with(&tasks, &Scripted(vec![hit.clone(), hit, miss.clone(), miss]), 1).unwrap();
        assert_eq!(ev.report.overall.precision_at_1, (1.0 + 1.0 / 3.0) / 2.0);
        assert_eq!(ev.report.overall.n_tasks, 4);
    }

    #[test]
    fn random_baseline_is_chance() {
        let tasks: Vec<_> = (0..4000).map(|i| task(20, i % 20, SubTask::Instance)).collect();
        let ev = evaluate_with(&tasks, &RandomScorer { seed: 9 }, 5).unwrap();
        let m = ev.report.subtasks[&SubTask::Instance];
        assert!((m.precision_at_1 - 0.05).abs() < 0.02, "{}", m.precision_at_1);
        assert!((m.recall_at_k - 0.25).abs() < 0.03, "{}", m.recall_at_k);
    }

    #[test]
    fn one_hot_oracle_encoder_is_perfect() {
        // identity layers: image features pass straight through
        let d = 6;
        let mut p = EncoderParams::zeros(d, 4, d, d);
        for i in 0..d {
            p.w1[i * (d + 4) + i] = 1.0;
            p.w2[i * d + i] = 1.0;
        }
        let enc = Encoder::new(p, ImageFeaturizer::default());
        let one_hot = |i: usize| {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            v
        };
        let tasks: Vec<RetrievalTask> = (0..d)
            .map(|t| RetrievalTask {
                query_image: ImageRef::Full { image: format!("q{t}"), features: Some(one_hot(t)) },
                query_text: String::new(),
                pool: (0..d).map(|i| ImageRef::Full { image: format!("c{i}"), features: Some(one_hot(i)) }).collect(),
                target_index: t,
                subtask: SubTask::Instance,
                query_image_mode: QueryImageMode::Full,
            })
            .collect();
        let ev = evaluate(&tasks, &enc, 5).unwrap();
        assert_eq!(ev.report.overall.precision_at_1, 1.0);
    }

    proptest! {
        #[test]
        fn recall_dominates_precision(ranks in proptest::collection::vec(proptest::option::of(1usize..30), 1..60), k in 1usize..10) {
            let records: Vec<RankRecord> = ranks.iter().enumerate().map(|(i, &rank)| RankRecord {
                task: i,
                subtask: if i % 2 == 0 { SubTask::Instance } else { SubTask::Location },
                target_index: 0,
                pool_size: 30,
                rank,
            }).collect();
            let r = metrics_from_ranks(&records, k).unwrap();
            for m in r.subtasks.values().chain(std::iter::once(&r.overall)) {
                prop_assert!(0.0 <= m.precision_at_1 && m.precision_at_1 <= m.recall_at_k && m.recall_at_k <= 1.0);
            }
        }
    }
}
