use serde::{Deserialize, Serialize};

use crate::cohort::ProgressionClass;
use crate::error::{Error, Result};

/// Per-knee class probabilities `(none, slow, fast)` with true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub knee_ids: Vec<String>,
    pub probs: Vec<[f64; 3]>,
    pub labels: Vec<ProgressionClass>,
}

impl PredictionSet {
    pub fn new(knee_ids: Vec<String>, probs: Vec<[f64; 3]>, labels: Vec<ProgressionClass>) -> Result<Self> {
        if knee_ids.len() != probs.len() || probs.len() != labels.len() {
            return Err(Error::data(format!(
                "prediction set lengths disagree: {} ids, {} triples, {} labels",
                knee_ids.len(),
                probs.len(),
                labels.len()
            )));
        }
        for (id, p) in knee_ids.iter().zip(&probs) {
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || p.iter().any(|&x| !(0.0..=1.0 + 1e-9).contains(&x)) {
                return Err(Error::data(format!("{id}: probabilities {p:?} do not form a distribution")));
            }
        }
        Ok(PredictionSet { knee_ids, probs, labels })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Pooled progression scores.
    pub fn pooled(&self) -> Vec<f64> {
        self.probs.iter().map(pool_progression).collect()
    }

    /// Whether each knee progresses at all.
    pub fn progressed(&self) -> Vec<bool> {
        self.labels.iter().map(|c| c.progresses()).collect()
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|p| (0..3).fold(0, |best, c| if p[c] > p[best] { c } else { best }))
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> PredictionSet {
        PredictionSet {
            knee_ids: idx.iter().map(|&i| self.knee_ids[i].clone()).collect(),
            probs: idx.iter().map(|&i| self.probs[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Probability of any progression within the horizon.
pub fn pool_progression(p: &[f64; 3]) -> f64 {
    p[1] + p[2]
}

/// Arithmetic mean of the members' probability triples, knee by knee.
pub fn ensemble_predict(members: &[PredictionSet]) -> Result<PredictionSet> {
    let first = members
        .first()
        .ok_or_else(|| Error::Usage("ensemble needs at least one member".into()))?;
    for m in &members[1..] {
        if m.knee_ids != first.knee_ids || m.labels != first.labels {
            return Err(Error::data("ensemble members were evaluated on different knees"));
        }
    }
    let n = members.len() as f64;
    let probs = (0..first.len())
        .map(|i| {
            let mut acc = [0.0; 3];
            for m in members {
                (0..3).for_each(|c| acc[c] += m.probs[i][c]);
            }
            acc.map(|x| x / n)
        })
        .collect();
    Ok(PredictionSet {
        knee_ids: first.knee_ids.clone(),
        probs,
        labels: first.labels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_and_ensemble() {
        assert_eq!(pool_progression(&[1.0, 0.0, 0.0]), 0.0);
        assert!((pool_progression(&[0.2, 0.3, 0.5]) - 0.8).abs() < 1e-15);
        let a = PredictionSet::new(vec!["k".into()], vec![[1.0, 0.0, 0.0]], vec![ProgressionClass::None]).unwrap();
        let b = PredictionSet::new(vec!["k".into()], vec![[0.0, 1.0, 0.0]], vec![ProgressionClass::None]).unwrap();
        assert_eq!(ensemble_predict(&[a.clone(), b]).unwrap().probs[0], [0.5, 0.5, 0.0]);
        assert_eq!(ensemble_predict(std::slice::from_ref(&a)).unwrap(), a);
        assert!(PredictionSet::new(vec!["k".into()], vec![[0.5, 0.0, 0.0]], vec![ProgressionClass::None]).is_err());
    }
}
