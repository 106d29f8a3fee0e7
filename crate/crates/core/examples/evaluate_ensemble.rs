//! Averages fold-model predictions into an ensemble and reports pooled
//! progression AP and ROC AUC with bootstrap spreads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volformer::cohort::ProgressionClass;
use volformer::eval::{ensemble_predict, evaluate, pooled_ap, PredictionSet};

/// A noisy fold model: the true class gets a bonus of `skill`.
fn member(labels: &[ProgressionClass], skill: f64, seed: u64) -> volformer::Result<PredictionSet> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let probs = labels
        .iter()
        .map(|c| {
            let mut p = [r.random::<f64>(), r.random(), r.random()];
            p[c.index()] += skill;
            let s: f64 = p.iter().sum();
            p.map(|x| x / s)
        })
        .collect();
    PredictionSet::new((0..labels.len()).map(|i| format!("K{i:03}")).collect(), probs, labels.to_vec())
}

fn main() -> volformer::Result<()> {
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let labels: Vec<ProgressionClass> = (0..150)
        .map(|_| match r.random::<f64>() {
            x if x < 0.73 => ProgressionClass::None,
            x if x < 0.92 => ProgressionClass::Slow,
            _ => ProgressionClass::Fast,
        })
        .collect();

    let members = (0..5).map(|f| member(&labels, 0.35, f)).collect::<volformer::Result<Vec<_>>>()?;
    for (f, m) in members.iter().enumerate() {
        println!("fold {f} model alone: AP {:.3}", pooled_ap(m)?);
    }
    let ens = ensemble_predict(&members)?;
    let report = evaluate(&ens, 1000, 0)?;
    println!(
        "ensemble: n {} prevalence {:.3} AP {:.3} ± {:.3} ROC AUC {:.3} ± {:.3} balanced accuracy {:.3}",
        report.n_knees, report.prevalence, report.ap, report.ap_spread, report.roc_auc, report.roc_auc_spread, report.balanced_accuracy
    );
    println!("confusion (rows true none/slow/fast): {:?}", report.confusion_matrix);
    Ok(())
}
