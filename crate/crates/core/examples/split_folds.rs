//! Splits a labeled cohort into a held-out institution and subject-grouped
//! cross-validation folds, then balances one training fold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use volformer::cohort::{apply_exclusions, resample_balance, split_dataset, LabeledKnee, ProgressionClass};
use volformer::data::{synth_generate, SynthConfig};

fn shares(knees: &[LabeledKnee], idx: &[usize]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for &i in idx {
        c[knees[i].label.class.index()] += 1.0;
    }
    c.map(|x| x / idx.len().max(1) as f64)
}

fn main() -> volformer::Result<()> {
    let mut cfg = SynthConfig::new(300, 11);
    cfg.dims = [8, 8, 4];
    let records: Vec<_> = synth_generate(&cfg)?.into_iter().map(|k| k.record).collect();
    let (knees, excluded) = apply_exclusions(&records, |_| true);
    println!("{} knees labeled, {} excluded", knees.len(), excluded.len());

    let splits = split_dataset(&knees, "INST1", 5, 11)?;
    let pct = |s: [f64; 3]| s.map(|x| format!("{:.1}%", 100.0 * x)).join(" / ");
    println!("held out {}: {} knees, {}", splits.holdout_institution, splits.eval.len(), pct(shares(&knees, &splits.eval)));
    for f in 0..splits.n_folds() {
        let v = splits.validation(f);
        println!("fold {f}: {} validation knees, {}", v.len(), pct(shares(&knees, v)));
    }

    let train = splits.training(0);
    let labels: Vec<ProgressionClass> = knees.iter().map(|k| k.label.class).collect();
    let balanced = resample_balance(&train, &labels, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("fold 0 training: {} knees, {} after balancing, {}", train.len(), balanced.len(), pct(shares(&knees, &balanced)));
    Ok(())
}
