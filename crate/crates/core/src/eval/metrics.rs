use crate::error::{Error, Result};

/// One threshold of a ranking: cumulative counts of everything scored at or
/// above `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub true_pos: usize,
    pub false_pos: usize,
}

fn check_binary(scores: &[f64], labels: &[bool], metric: &str) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "binary metric",
            lhs: vec![scores.len()],
            rhs: vec![labels.len()],
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::data(format!("{metric}: score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "{metric} needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Distinct thresholds in descending order. Tied scores share one point.
pub fn threshold_points(scores: &[f64], labels: &[bool]) -> Vec<ThresholdPoint> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<ThresholdPoint> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(ThresholdPoint {
            threshold: t,
            true_pos: tp,
            false_pos: fp,
        });
    }
    out
}

/// Step-wise area under the precision-recall curve,
/// `sum_n (R_n - R_{n-1}) P_n` over descending thresholds.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_binary(scores, labels, "average precision")?;
    let mut ap = 0.0;
    let mut prev_tp = 0;
    for p in threshold_points(scores, labels) {
        if p.true_pos > prev_tp {
            let precision = p.true_pos as f64 / (p.true_pos + p.false_pos) as f64;
            ap += (p.true_pos - prev_tp) as f64 / pos as f64 * precision;
            prev_tp = p.true_pos;
        }
    }
    Ok(ap)
}

/// `P(s+ > s-) + P(s+ = s-) / 2`, counted over tie groups.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels, "ROC AUC")?;
    // each positive beats every negative ranked strictly below its group
    let mut wins = 0.0;
    let (mut tp, mut fp) = (0, 0);
    for p in threshold_points(scores, labels) {
        let group_pos = (p.true_pos - tp) as f64;
        let group_neg = (p.false_pos - fp) as f64;
        let below_neg = (neg - p.false_pos) as f64;
        wins += group_pos * (below_neg + group_neg / 2.0);
        (tp, fp) = (p.true_pos, p.false_pos);
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// ROC points `(fpr, tpr)` from `(0, 0)` through each threshold.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    let (pos, neg) = check_binary(scores, labels, "ROC curve")?;
    let mut out = vec![(f64::INFINITY, 0.0, 0.0)];
    for p in threshold_points(scores, labels) {
        out.push((p.threshold, p.false_pos as f64 / neg as f64, p.true_pos as f64 / pos as f64));
    }
    Ok(out)
}

/// PR points `(recall, precision)`. The leading `recall = 0` point carries
/// the precision of the top-ranked threshold group.
pub fn pr_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    let (pos, _) = check_binary(scores, labels, "PR curve")?;
    let pts = threshold_points(scores, labels);
    let first = pts[0];
    let mut out = vec![(
        f64::INFINITY,
        0.0,
        first.true_pos as f64 / (first.true_pos + first.false_pos) as f64,
    )];
    for p in pts {
        out.push((
            p.threshold,
            p.true_pos as f64 / pos as f64,
            p.true_pos as f64 / (p.true_pos + p.false_pos) as f64,
        ));
    }
    Ok(out)
}

/// Trapezoidal area under the ROC points.
pub fn trapezoid_auc(points: &[(f64, f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) * (w[1].2 + w[0].2) / 2.0)
        .sum()
}

/// Mean per-class recall and the confusion matrix (rows are true classes).
/// Classes absent from `labels` are left out of the mean.
pub fn balanced_accuracy_and_confusion(pred: &[usize], labels: &[usize]) -> Result<(f64, [[usize; 3]; 3])> {
    if pred.len() != labels.len() {
        return Err(Error::Shape {
            op: "confusion matrix",
            lhs: vec![pred.len()],
            rhs: vec![labels.len()],
        });
    }
    let mut m = [[0usize; 3]; 3];
    for (&p, &t) in pred.iter().zip(labels) {
        if p > 2 || t > 2 {
            return Err(Error::data(format!("class index out of range: predicted {p}, true {t}")));
        }
        m[t][p] += 1;
    }
    let recalls: Vec<f64> = (0..3)
        .filter_map(|c| {
            let support: usize = m[c].iter().sum();
            (support > 0).then(|| m[c][c] as f64 / support as f64)
        })
        .collect();
    if recalls.is_empty() {
        return Err(Error::UndefinedMetric("balanced accuracy of an empty set".into()));
    }
    Ok((recalls.iter().sum::<f64>() / recalls.len() as f64, m))
}
