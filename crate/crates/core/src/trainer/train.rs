//! Mini-batch training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::featurize::{ImageFeaturizer, TextFeaturizer};
use crate::encoder::model::EncoderParams;
use crate::error::{Error, Result};
use crate::trainer::gradcache::{gradcache_step, Batch};
use crate::trainer::schedule::lr_schedule;
use crate::types::{TrainerConfig, TrainingTriplet};

/// A triplet after featurization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub query_image: Vec<f64>,
    pub query_text: Vec<f64>,
    pub positive: Vec<f64>,
}

/// Featurizes every triplet, in order. All image features must share one
/// length, which becomes the encoder's image dimension.
pub fn featurize_triplets(
    triplets: &[TrainingTriplet],
    images: &ImageFeaturizer,
    text: &TextFeaturizer,
) -> Result<Vec<TrainingExample>> {
    let examples = triplets
        .par_iter()
        .map(|t| {
            Ok(TrainingExample {
                query_image: images.features(&t.query_image)?,
                query_text: text.featurize(&t.query_text),
                positive: images.features(&t.positive_image)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = examples.first() {
        let d = first.query_image.len();
        for ex in &examples {
            for len in [ex.query_image.len(), ex.positive.len()] {
                if len != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: len,
                    });
                }
            }
        }
    }
    Ok(examples)
}

/// One optimizer step. Serialized as a training-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub total_steps: u64,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }
}

/// Number of optimizer steps `train` will take.
pub fn planned_steps(config: &TrainerConfig, n_examples: usize) -> u64 {
    let per_epoch = n_examples.div_ceil(config.batch_size) as u64;
    let planned = per_epoch * config.epochs as u64;
    config.total_steps.map_or(planned, |cap| planned.min(cap))
}

pub fn init_params(config: &TrainerConfig, image_dim: usize) -> EncoderParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    EncoderParams::init(image_dim, config.text_dim, config.hidden_dim, config.embed_dim, &mut rng)
}

pub fn train(config: &TrainerConfig, examples: &[TrainingExample]) -> Result<(EncoderParams, TrainLog)> {
    train_with(config, examples, |_| {})
}

/// Plain gradient descent with linearly decaying learning rate. Each epoch
/// visits the examples in a seeded shuffle; the last short batch is kept.
/// `on_step` sees every log entry as it is produced.
pub fn train_with(
    config: &TrainerConfig,
    examples: &[TrainingExample],
    mut on_step: impl FnMut(&StepLog),
) -> Result<(EncoderParams, TrainLog)> {
    config.validate()?;
    let first = examples
        .first()
        .ok_or_else(|| Error::Validation("training set is empty".into()))?;
    let mut params = init_params(config, first.query_image.len());
    let total = planned_steps(config, examples.len());
    let mut log = TrainLog {
        steps: Vec::with_capacity(total as usize),
        total_steps: total,
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let start = Instant::now();
    let mut step = 0u64;

    'epochs: for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for idx in order.chunks(config.batch_size) {
            if step >= total {
                break 'epochs;
            }
            let batch = Batch::new(
                idx.iter()
                    .map(|&i| (examples[i].query_image.clone(), examples[i].query_text.clone()))
                    .collect(),
                idx.iter().map(|&i| examples[i].positive.clone()).collect(),
            )?;
            let out = gradcache_step(&params, &batch, config.chunk_size, config.temperature)?;
            let lr = lr_schedule(step, total, config.lr0);
            params.add_scaled(-lr, &out.grads);
            if !params.is_finite() {
                return Err(Error::Numeric(format!("parameters diverged at step {step}")));
            }
            let entry = StepLog {
                step,
                loss: out.loss,
                lr,
                grad_norm: out.grads.l2_norm(),
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            on_step(&entry);
            log.steps.push(entry);
            step += 1;
        }
    }
    Ok((params, log))
}
