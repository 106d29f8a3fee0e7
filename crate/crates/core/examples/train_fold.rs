//! Trains a toy slice-wise transformer on one cross-validation fold of a
//! synthetic cohort and scores the held-out institution.

use std::collections::BTreeMap;

use volformer::arch::{Family, ModelConfig};
use volformer::cohort::{apply_exclusions, split_dataset};
use volformer::data::{preprocess, synth_generate, SliceStack, SynthConfig, SYNTH_CROP};
use volformer::eval::pooled_ap;
use volformer::train::{model_from_tensors, predict, train_fold, Sample, TrainConfig};

fn main() -> volformer::Result<()> {
    let knees = synth_generate(&SynthConfig::new(120, 2))?;
    let volumes: BTreeMap<String, _> = knees
        .iter()
        .map(|k| Ok((k.record.knee_id(), preprocess(&k.volume, SYNTH_CROP, [2, 2, 2])?)))
        .collect::<volformer::Result<_>>()?;
    let records: Vec<_> = knees.iter().map(|k| k.record.clone()).collect();
    let (labeled, _) = apply_exclusions(&records, |_| true);

    let model_cfg = ModelConfig::toy(Family::Trf2d);
    let samples = labeled
        .iter()
        .map(|k| {
            let id = k.record.knee_id();
            let stacks = model_cfg
                .views
                .iter()
                .map(|&v| Ok((v, SliceStack::from_volume(&volumes[&id], v, &id)?)))
                .collect::<volformer::Result<_>>()?;
            Ok(Sample { id, label: k.label.class, stacks })
        })
        .collect::<volformer::Result<Vec<_>>>()?;

    let splits = split_dataset(&labeled, "INST1", 5, 2)?;
    let cfg = TrainConfig { epochs: 8, warmup_epochs: 1, seed: 2, ..TrainConfig::default() };
    let out = train_fold(&model_cfg, &samples, &splits.training(0), splits.validation(0), &cfg, None)?;
    for r in &out.history {
        println!("epoch {:>2} lr {:.1e} loss {:.4} val AP {:?}", r.epoch, r.lr, r.train_loss, r.val_ap.map(|x| (x * 1e4).round() / 1e4));
    }
    println!("kept epoch {} (val AP {:?})", out.snapshot.epoch, out.snapshot.val_ap);

    let model = model_from_tensors(&model_cfg, &out.snapshot.tensors)?;
    let preds = predict(&model, &samples, &splits.eval, 8)?;
    println!("held-out {}: {} knees, AP {:.3}", splits.holdout_institution, preds.len(), pooled_ap(&preds)?);
    Ok(())
}
