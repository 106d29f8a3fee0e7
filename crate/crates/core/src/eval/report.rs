use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, balanced_accuracy_and_confusion, pr_points, roc_auc, roc_points};
use super::predict::PredictionSet;
use crate::error::{Error, Result};
use crate::parallel::{par_map, thread_count};

pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// Label written into every report; the spread is a knee-level bootstrap.
pub const SPREAD_METHOD: &str = "bootstrap(assumption)";

/// Draws per resample before giving up on finding both classes.
const MAX_REDRAWS: usize = 1000;

/// Mean and sample standard deviation of `metric` over `n_boot` knee-level
/// resamples with replacement. Resample `b` uses its own stream derived
/// from `(seed, b)`; a resample the metric rejects is redrawn.
pub fn bootstrap_spread<F>(metric: F, preds: &PredictionSet, n_boot: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&PredictionSet) -> Result<f64> + Sync,
{
    if n_boot < 100 {
        return Err(Error::config(format!("bootstrap needs at least 100 resamples, got {n_boot}")));
    }
    if preds.is_empty() {
        return Err(Error::UndefinedMetric("bootstrap of an empty prediction set".into()));
    }
    metric(preds)?;
    let n = preds.len();
    let values = par_map(n_boot, thread_count(), |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        for _ in 0..MAX_REDRAWS {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            match metric(&preds.subset(&idx)) {
                Ok(v) => return Ok(v),
                Err(Error::UndefinedMetric(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::UndefinedMetric("no non-degenerate bootstrap resample found".into()))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / n_boot as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_boot - 1) as f64;
    Ok((mean, var.sqrt()))
}

pub fn pooled_ap(p: &PredictionSet) -> Result<f64> {
    average_precision(&p.pooled(), &p.progressed())
}

pub fn pooled_auc(p: &PredictionSet) -> Result<f64> {
    roc_auc(&p.pooled(), &p.progressed())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_knees: usize,
    pub prevalence: f64,
    pub ap: f64,
    pub ap_spread: f64,
    pub roc_auc: f64,
    pub roc_auc_spread: f64,
    pub balanced_accuracy: f64,
    /// Rows are true classes (none, slow, fast), columns predictions.
    pub confusion_matrix: [[usize; 3]; 3],
    pub spread_method: String,
    pub n_boot: usize,
    pub seed: u64,
    /// `(threshold, fpr, tpr)`. The leading infinite threshold is stored as
    /// JSON `null`.
    #[serde(with = "curve_json")]
    pub roc_curve: Vec<(f64, f64, f64)>,
    /// `(threshold, recall, precision)`.
    #[serde(with = "curve_json")]
    pub pr_curve: Vec<(f64, f64, f64)>,
}

mod curve_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(points: &[(f64, f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<(Option<f64>, f64, f64)> = points
            .iter()
            .map(|&(t, a, b)| (t.is_finite().then_some(t), a, b))
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64, f64)>, D::Error> {
        let rows = Vec::<(Option<f64>, f64, f64)>::deserialize(d)?;
        Ok(rows.into_iter().map(|(t, a, b)| (t.unwrap_or(f64::INFINITY), a, b)).collect())
    }
}

/// Point estimates on the full set, spreads from the bootstrap.
pub fn evaluate(preds: &PredictionSet, n_boot: usize, seed: u64) -> Result<EvalReport> {
    let scores = preds.pooled();
    let labels = preds.progressed();
    let (bacc, confusion) =
        balanced_accuracy_and_confusion(&preds.argmax(), &preds.labels.iter().map(|c| c.index()).collect::<Vec<_>>())?;
    let (_, ap_spread) = bootstrap_spread(pooled_ap, preds, n_boot, seed)?;
    let (_, auc_spread) = bootstrap_spread(pooled_auc, preds, n_boot, seed)?;
    Ok(EvalReport {
        n_knees: preds.len(),
        prevalence: labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64,
        ap: average_precision(&scores, &labels)?,
        ap_spread,
        roc_auc: roc_auc(&scores, &labels)?,
        roc_auc_spread: auc_spread,
        balanced_accuracy: bacc,
        confusion_matrix: confusion,
        spread_method: SPREAD_METHOD.into(),
        n_boot,
        seed,
        roc_curve: roc_points(&scores, &labels)?,
        pr_curve: pr_points(&scores, &labels)?,
    })
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        "inf".into()
    } else {
        format!("{t}")
    }
}

/// `roc.csv`, `pr.csv` and `confusion.csv`; curve rows run from the
/// highest threshold down.
pub fn export_curves(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut roc = String::from("threshold,fpr,tpr\n");
    for (t, x, y) in &report.roc_curve {
        writeln!(roc, "{},{x},{y}", fmt_threshold(*t)).unwrap();
    }
    let mut pr = String::from("threshold,recall,precision\n");
    for (t, r, p) in &report.pr_curve {
        writeln!(pr, "{},{r},{p}", fmt_threshold(*t)).unwrap();
    }
    let mut cm = String::from("true\\pred,none,slow,fast\n");
    for (name, row) in ["none", "slow", "fast"].iter().zip(&report.confusion_matrix) {
        writeln!(cm, "{name},{},{},{}", row[0], row[1], row[2]).unwrap();
    }
    for (file, body) in [("roc.csv", roc), ("pr.csv", pr), ("confusion.csv", cm)] {
        let path = dir.join(file);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::ProgressionClass;

    fn set(n: usize, seed: u64) -> PredictionSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let c = ProgressionClass::from_index(rng.random_range(0..3)).unwrap();
            let mut p = [rng.random::<f64>(), rng.random(), rng.random()];
            p[c.index()] += 0.5;
            let s: f64 = p.iter().sum();
            probs.push(p.map(|x| x / s));
            labels.push(c);
        }
        PredictionSet::new((0..n).map(|i| format!("k{i}")).collect(), probs, labels).unwrap()
    }

    #[test]
    fn bootstrap_is_deterministic_and_rejects_small_n() {
        let p = set(60, 1);
        let a = bootstrap_spread(pooled_ap, &p, 200, 5).unwrap();
        assert_eq!(a, bootstrap_spread(pooled_ap, &p, 200, 5).unwrap());
        assert!(a.1 > 0.0);
        assert!(bootstrap_spread(pooled_ap, &p, 99, 5).is_err());
    }

    #[test]
    fn constant_metric_has_zero_spread() {
        let p = set(30, 2);
        let (m, s) = bootstrap_spread(|_| Ok(0.5), &p, 100, 0).unwrap();
        assert_eq!((m, s), (0.5, 0.0));
    }

    #[test]
    fn report_curves_agree_with_metrics() {
        let p = set(80, 3);
        let r = evaluate(&p, 100, 0).unwrap();
        let trap = super::super::metrics::trapezoid_auc(&r.roc_curve);
        assert!((trap - r.roc_auc).abs() < 1e-9);
        let support: Vec<usize> = r.confusion_matrix.iter().map(|row| row.iter().sum()).collect();
        for c in ProgressionClass::ALL {
            assert_eq!(support[c.index()], p.labels.iter().filter(|&&l| l == c).count());
        }
        let dir = tempfile::tempdir().unwrap();
        export_curves(&r, dir.path()).unwrap();
        let roc = std::fs::read_to_string(dir.path().join("roc.csv")).unwrap();
        assert!(roc.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    }
}
