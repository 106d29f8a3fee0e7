//! Focal loss, warmup schedule, Adam with decoupled weight decay, and the
//! per-fold training loop with best-AP snapshot selection.

mod adam;
mod config;
mod loss;
mod sample;
mod trainer;

pub use adam::{clip_gradients, Adam, BETA1, BETA2, EPS};
pub use config::TrainConfig;
pub use loss::{cross_entropy, focal_loss, lr_schedule, PROB_FLOOR};
pub use sample::{load_samples, volume_path, Sample};
pub use trainer::{
    fold_seed, history_csv, model_from_tensors, predict, train_fold, EpochRecord, FoldOutcome, Snapshot, SnapshotMeta,
    HISTORY_FILE, SNAPSHOT_FILE, SNAPSHOT_META_FILE,
};
