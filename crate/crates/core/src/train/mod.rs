//! Per-class training: within-instance pair sampling, elementwise gradient
//! clipping, Adam and the loop that ties them together.

mod config;
mod optim;
mod pairs;
mod trainer;

pub use config::{AdamConfig, TrainConfig};
pub use optim::{adam_step, clip_gradients, AdamState};
pub use pairs::{
    assemble_batch, sample_pair_indices, sample_pairs, split_instances, InstanceSplit, PairBatch,
    PairIndex,
};
pub use trainer::{
    run_description, train, LossRecord, LossTrace, TrainOutcome, CHECKPOINT_DIR, CONFIG_FILE,
    FINAL_CHECKPOINT, LAST_GOOD_CHECKPOINT, LOSS_FILE,
};
