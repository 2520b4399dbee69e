//! Contrastive training: InfoNCE, gradient caching and the training loop.

pub mod gradcache;
pub mod loss;
pub mod schedule;
pub mod train;

pub use gradcache::{full_batch_step, gradcache_step, Batch, StepOutput};
pub use loss::{infonce_embedding_grads, infonce_loss, infonce_with_grads, InfoNceGrads};
pub use schedule::lr_schedule;
pub use train::{
    featurize_triplets, init_params, planned_steps, train, train_with, StepLog, TrainLog,
    TrainingExample,
};
