#![allow(dead_code)]

//! Records-only cohorts for label and split tests; no imaging.

use std::collections::BTreeMap;

use rand::Rng;
use volformer::cohort::{apply_exclusions, KneeRecord, LabeledKnee, ProgressionClass, Sex, Side, VISITS};

use super::rng;

/// Monotone grade trajectory over every visit that lands in `class`.
pub fn trajectory(r: &mut impl Rng, class: ProgressionClass) -> BTreeMap<u32, u8> {
    let base: u8 = r.random_range(1..=3);
    let event = match class {
        ProgressionClass::None => None,
        ProgressionClass::Fast => Some(VISITS[r.random_range(1..=5)]),
        ProgressionClass::Slow => Some(96),
    };
    VISITS
        .iter()
        .map(|&m| (m, if event.is_some_and(|e| m >= e) { base + 1 } else { base }))
        .collect()
}

/// `n_subjects` subjects with both knees, spread over `institutions`
/// sites, classes drawn with the given shares.
pub fn random_cohort(n_subjects: usize, institutions: usize, shares: [f64; 3], seed: u64) -> Vec<KneeRecord> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(2 * n_subjects);
    for s in 0..n_subjects {
        let inst = format!("INST{}", r.random_range(1..=institutions));
        for side in [Side::L, Side::R] {
            let u: f64 = r.random();
            let class = if u < shares[0] {
                ProgressionClass::None
            } else if u < shares[0] + shares[1] {
                ProgressionClass::Slow
            } else {
                ProgressionClass::Fast
            };
            out.push(KneeRecord {
                subject_id: format!("S{s:04}"),
                side,
                institution_id: inst.clone(),
                age: r.random_range(45.0..79.0),
                sex: if r.random() { Sex::F } else { Sex::M },
                bmi: Some(r.random_range(19.0..35.0)),
                tka_baseline: false,
                klg: trajectory(&mut r, class),
            });
        }
    }
    out
}

pub fn labeled(records: &[KneeRecord]) -> Vec<LabeledKnee> {
    apply_exclusions(records, |_| true).0
}
