use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::exclude::LabeledKnee;
use super::label::ProgressionClass;
use crate::error::{Error, Result};

/// Knee indices into the labeled cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub holdout_institution: String,
    pub eval: Vec<usize>,
    /// Cross-validation folds over the remaining knees.
    pub folds: Vec<Vec<usize>>,
}

impl Splits {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn validation(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Every non-eval knee outside `fold`, in ascending order.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        let mut t: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        t.sort_unstable();
        t
    }

    pub fn all_training(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.folds.iter().flatten().copied().collect();
        t.sort_unstable();
        t
    }
}

/// Holds out one institution for evaluation and distributes the other
/// subjects over `n_folds` folds, keeping both knees of a subject together.
/// Subjects carrying rarer classes are placed first; each goes to the fold
/// where it most reduces the squared gap to the per-fold class targets.
pub fn split_dataset(knees: &[LabeledKnee], holdout_institution: &str, n_folds: usize, seed: u64) -> Result<Splits> {
    if n_folds < 2 {
        return Err(Error::config(format!("n_folds must be at least 2, got {n_folds}")));
    }
    if !knees.iter().any(|k| k.record.institution_id == holdout_institution) {
        return Err(Error::config(format!("hold-out institution '{holdout_institution}' has no knees")));
    }
    let mut eval = Vec::new();
    let mut subjects: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in knees.iter().enumerate() {
        if k.record.institution_id == holdout_institution {
            eval.push(i);
        } else {
            subjects.entry(&k.record.subject_id).or_default().push(i);
        }
    }
    // a subject spanning institutions must not leak into training
    let eval_subjects: std::collections::BTreeSet<&str> =
        eval.iter().map(|&i| knees[i].record.subject_id.as_str()).collect();
    for s in &eval_subjects {
        if let Some(extra) = subjects.remove(s) {
            eval.extend(extra);
        }
    }
    eval.sort_unstable();

    let counts = |idx: &[usize]| {
        let mut c = [0f64; 3];
        for &i in idx {
            c[knees[i].label.class.index()] += 1.0;
        }
        c
    };
    let mut groups: Vec<(Vec<usize>, [f64; 3])> = subjects.into_values().map(|g| (g.clone(), counts(&g))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let rarest = |c: &[f64; 3]| {
        if c[2] > 0.0 {
            0
        } else if c[1] > 0.0 {
            1
        } else {
            2
        }
    };
    groups.sort_by_key(|(_, c)| rarest(c));

    let mut total = [0f64; 3];
    for (_, c) in &groups {
        (0..3).for_each(|j| total[j] += c[j]);
    }
    let target = total.map(|t| t / n_folds as f64);
    let mut fold_counts = vec![[0f64; 3]; n_folds];
    let mut folds = vec![Vec::new(); n_folds];
    for (g, c) in groups {
        let cost = |fc: &[f64; 3]| -> f64 {
            (0..3)
                .map(|j| (fc[j] + c[j] - target[j]).powi(2) - (fc[j] - target[j]).powi(2))
                .sum()
        };
        let mut best = Vec::new();
        let mut best_cost = f64::INFINITY;
        for (f, fc) in fold_counts.iter().enumerate() {
            let v = cost(fc);
            if v < best_cost - 1e-9 {
                best_cost = v;
                best = vec![f];
            } else if (v - best_cost).abs() <= 1e-9 {
                best.push(f);
            }
        }
        let f = best[rng.random_range(0..best.len())];
        (0..3).for_each(|j| fold_counts[f][j] += c[j]);
        folds[f].extend(g);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(Splits {
        holdout_institution: holdout_institution.to_string(),
        eval,
        folds,
    })
}

/// Oversamples every class up to the majority count. Each class contributes
/// `floor(M / n)` full copies of its samples plus a random subset of the
/// remainder, so every sample appears at least once; the epoch is shuffled.
pub fn resample_balance(train: &[usize], labels: &[ProgressionClass], rng: &mut impl Rng) -> Result<Vec<usize>> {
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for &i in train {
        let c = labels
            .get(i)
            .ok_or_else(|| Error::config(format!("training index {i} has no label")))?;
        by_class[c.index()].push(i);
    }
    if let Some(c) = (0..3).find(|&c| by_class[c].is_empty()) {
        return Err(Error::config(format!(
            "class {} has no training samples",
            ProgressionClass::from_index(c).unwrap()
        )));
    }
    let majority = by_class.iter().map(Vec::len).max().unwrap();
    let mut epoch = Vec::with_capacity(3 * majority);
    for members in &by_class {
        let n = members.len();
        for _ in 0..majority / n {
            epoch.extend_from_slice(members);
        }
        let rest = majority % n;
        epoch.extend(members.choose_multiple(rng, rest).copied());
    }
    epoch.shuffle(rng);
    Ok(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::label::ProgressionLabel;
    use crate::cohort::record::{KneeRecord, Sex, Side};

    fn cohort(n_subjects: usize, seed: u64) -> Vec<LabeledKnee> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for s in 0..n_subjects {
            let inst = ["A", "B", "C", "D"][s % 4];
            for side in [Side::L, Side::R] {
                let u: f64 = rng.random();
                let class = if u < 0.077 {
                    ProgressionClass::Fast
                } else if u < 0.27 {
                    ProgressionClass::Slow
                } else {
                    ProgressionClass::None
                };
                out.push(LabeledKnee {
                    record: KneeRecord {
                        subject_id: format!("S{s}"),
                        side,
                        institution_id: inst.into(),
                        age: 60.0,
                        sex: Sex::F,
                        bmi: Some(25.0),
                        tka_baseline: false,
                        klg: [(0, 1)].into_iter().collect(),
                    },
                    label: ProgressionLabel {
                        class,
                        event_month: None,
                        rule_trace: String::new(),
                    },
                });
            }
        }
        out
    }

    #[test]
    fn holdout_and_disjointness() {
        let knees = cohort(300, 1);
        let s = split_dataset(&knees, "B", 5, 7).unwrap();
        assert!(s.eval.iter().all(|&i| knees[i].record.institution_id == "B"));
        let mut seen = std::collections::HashMap::new();
        for (f, fold) in s.folds.iter().enumerate() {
            for &i in fold {
                if let Some(prev) = seen.insert(&knees[i].record.subject_id, f) {
                    assert_eq!(prev, f);
                }
            }
        }
        assert_eq!(s.eval.len() + s.all_training().len(), knees.len());
        assert_eq!(split_dataset(&knees, "B", 5, 7).unwrap(), s);
        assert!(split_dataset(&knees, "Z", 5, 7).is_err());
        assert!(split_dataset(&knees, "B", 1, 7).is_err());
    }

    #[test]
    fn counts_oracle() {
        let mut labels = Vec::new();
        for (c, n) in [(ProgressionClass::None, 730), (ProgressionClass::Slow, 193), (ProgressionClass::Fast, 77)] {
            labels.extend(std::iter::repeat_n(c, n));
        }
        let train: Vec<usize> = (0..labels.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let epoch = resample_balance(&train, &labels, &mut rng).unwrap();
        assert_eq!(epoch.len(), 3 * 730);
        for c in ProgressionClass::ALL {
            assert_eq!(epoch.iter().filter(|&&i| labels[i] == c).count(), 730);
        }
        for i in 730..1000 {
            assert!(epoch.contains(&i));
        }
        assert!(resample_balance(&train[..730], &labels, &mut rng).is_err());
    }
}
