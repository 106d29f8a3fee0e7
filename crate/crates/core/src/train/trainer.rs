use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_gradients, Adam};
use super::config::TrainConfig;
use super::loss::{focal_loss, lr_schedule};
use super::sample::Sample;
use crate::arch::{build_model, Model, ModelConfig, Views};
use crate::checkpoint::{self, CheckpointTensor};
use crate::cohort::{resample_balance, ProgressionClass};
use crate::error::{Error, Result};
use crate::eval::{pooled_ap, pooled_auc, PredictionSet};
use crate::nn::{apply_bn_updates, Forward, BN_MOMENTUM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// `None` when the validation split holds a single class.
    pub val_ap: Option<f64>,
    pub val_auc: Option<f64>,
}

/// Parameters from the best validation epoch so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub val_ap: Option<f64>,
    pub tensors: Vec<CheckpointTensor>,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub snapshot: Snapshot,
    pub history: Vec<EpochRecord>,
    /// Probabilities raised to the floor inside the loss.
    pub clamped_probs: usize,
}

pub const HISTORY_FILE: &str = "history.csv";
pub const SNAPSHOT_FILE: &str = "snapshot.vfwt";
pub const SNAPSHOT_META_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub epoch: usize,
    pub val_ap: Option<f64>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,lr,train_loss,val_ap,val_auc\n");
    for r in history {
        writeln!(out, "{},{},{},{},{}", r.epoch, r.lr, r.train_loss, opt(r.val_ap), opt(r.val_auc)).unwrap();
    }
    out
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Independent seed for fold `fold` of a run seeded with `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + fold as u64);
    rng.random()
}

/// Class probabilities for `idx`, without augmentation.
pub fn predict(model: &Model, samples: &[Sample], idx: &[usize], batch_size: usize) -> Result<PredictionSet> {
    let mut probs = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch: Vec<Views> = chunk.iter().map(|&i| samples[i].views()).collect::<Result<_>>()?;
        let f = Forward::eval(&model.store);
        let p = model.probabilities(&f, &batch)?;
        probs.extend(p.data().chunks(3).map(|r| [r[0], r[1], r[2]]));
    }
    PredictionSet::new(
        idx.iter().map(|&i| samples[i].id.clone()).collect(),
        probs,
        idx.iter().map(|&i| samples[i].label).collect(),
    )
}

/// Rebuilds a model from snapshot tensors; every tensor must be covered.
pub fn model_from_tensors(cfg: &ModelConfig, tensors: &[CheckpointTensor]) -> Result<Model> {
    let mut model = Model::plan(cfg)?;
    model.store.materialize(0);
    let loaded = model.store.load_matching(tensors)?;
    if loaded != model.store.len() {
        return Err(Error::Load(format!(
            "snapshot covers {loaded} of {} tensors",
            model.store.len()
        )));
    }
    Ok(model)
}

/// Trains one fold. Every epoch draws a class-balanced resample of `train`,
/// runs augmented mini-batches through focal loss and Adam, then scores
/// `val` by pooled-progression AP. The first epoch with the highest AP is
/// kept. With `out_dir`, the history and the current best snapshot are
/// written after every epoch, so they survive a divergence.
pub fn train_fold(
    model_cfg: &ModelConfig,
    samples: &[Sample],
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<FoldOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("training and validation splits must be non-empty"));
    }
    if let Some(&i) = train.iter().chain(val).find(|&&i| i >= samples.len()) {
        return Err(Error::config(format!("sample index {i} out of range")));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut model = build_model(model_cfg, cfg.seed)?;
    let mut adam = Adam::new(&model.store);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    data_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let labels: Vec<ProgressionClass> = samples.iter().map(|s| s.label).collect();
    let policy = cfg.augment_policy();

    let mut history: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Snapshot> = None;
    let mut clamped_probs = 0;
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(cfg, epoch);
        let mut order = resample_balance(train, &labels, &mut data_rng)?;
        if let Some(n) = cfg.epoch_samples {
            order.truncate(n);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Views> = chunk
                .iter()
                .map(|&i| samples[i].augmented_views(&mut data_rng, &policy))
                .collect::<Result<_>>()?;
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i].index()).collect();
            let f = Forward::train(&model.store, dropout_rng.random());
            let probs = model.probabilities(&f, &batch)?;
            let (loss, clamped) = focal_loss(&probs, &targets, cfg.focal_gamma)?;
            clamped_probs += clamped;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Divergence(format!("epoch {epoch}: loss is {value}")));
            }
            loss.backward()?;
            let mut grads = f.gradients();
            let updates = f.take_bn_updates();
            drop(f);
            if let Some(max) = cfg.grad_clip {
                clip_gradients(&mut grads, max);
            }
            adam.step(&mut model.store, &grads, lr, cfg.weight_decay)
                .map_err(|e| match e {
                    Error::Divergence(m) => Error::Divergence(format!("epoch {epoch}: {m}")),
                    other => other,
                })?;
            apply_bn_updates(&mut model.store, &updates, BN_MOMENTUM);
            loss_sum += value * chunk.len() as f64;
        }
        let preds = predict(&model, samples, val, cfg.batch_size)?;
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / order.len() as f64,
            val_ap: defined(pooled_ap(&preds))?,
            val_auc: defined(pooled_auc(&preds))?,
        };
        let improved = match &best {
            None => true,
            Some(b) => record.val_ap.unwrap_or(f64::NEG_INFINITY) > b.val_ap.unwrap_or(f64::NEG_INFINITY),
        };
        if improved {
            best = Some(Snapshot {
                epoch,
                val_ap: record.val_ap,
                tensors: model.store.to_checkpoint(),
            });
        }
        history.push(record);
        if let Some(dir) = out_dir {
            write_file(&dir.join(HISTORY_FILE), history_csv(&history))?;
            if improved {
                let snap = best.as_ref().unwrap();
                checkpoint::save(&dir.join(SNAPSHOT_FILE), &snap.tensors)?;
                let meta = SnapshotMeta {
                    epoch: snap.epoch,
                    val_ap: snap.val_ap,
                };
                write_file(
                    &dir.join(SNAPSHOT_META_FILE),
                    serde_json::to_string_pretty(&meta).expect("snapshot metadata serializes"),
                )?;
            }
        }
    }
    Ok(FoldOutcome {
        snapshot: best.expect("at least one epoch ran"),
        history,
        clamped_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Family;
    use crate::data::View;
    use std::collections::BTreeMap;

    fn toy_samples(n: usize) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        (0..n)
            .map(|i| {
                let label = ProgressionClass::from_index(i % 3).unwrap();
                let level = 60.0 + 60.0 * label.index() as f32;
                let data = (0..8 * 32 * 32).map(|_| level + rng.random_range(-20.0..20.0)).collect();
                let stack = crate::data::SliceStack {
                    view: View::Sag,
                    slices: 8,
                    height: 32,
                    width: 32,
                    data,
                    provenance: vec![],
                };
                Sample {
                    id: format!("k{i}"),
                    label,
                    stacks: BTreeMap::from([(View::Sag, stack)]),
                }
            })
            .collect()
    }

    #[test]
    fn replay_is_deterministic_and_snapshot_is_argmax() {
        let samples = toy_samples(9);
        let idx: Vec<usize> = (0..9).collect();
        let cfg = TrainConfig {
            epochs: 3,
            warmup_epochs: 1,
            seed: 5,
            ..TrainConfig::default()
        };
        let model_cfg = ModelConfig::toy(Family::Fc2d);
        let dir = tempfile::tempdir().unwrap();
        let a = train_fold(&model_cfg, &samples, &idx, &idx, &cfg, Some(dir.path())).unwrap();
        let b = train_fold(&model_cfg, &samples, &idx, &idx, &cfg, None).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.snapshot, b.snapshot);
        let best = a
            .history
            .iter()
            .fold(None::<&EpochRecord>, |acc, r| match acc {
                Some(x) if x.val_ap.unwrap_or(f64::NEG_INFINITY) >= r.val_ap.unwrap_or(f64::NEG_INFINITY) => Some(x),
                _ => Some(r),
            })
            .unwrap();
        assert_eq!(a.snapshot.epoch, best.epoch);
        let csv = std::fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 4);
        let tensors = checkpoint::load(&dir.path().join(SNAPSHOT_FILE)).unwrap();
        let model = model_from_tensors(&model_cfg, &tensors).unwrap();
        assert_eq!(predict(&model, &samples, &idx, 4).unwrap().len(), 9);
    }
}
