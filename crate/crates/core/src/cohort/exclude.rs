use std::fmt;

use serde::{Deserialize, Serialize};

use super::label::{derive_label, LabelOutcome, ProgressionLabel};
use super::record::KneeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Klg4Baseline,
    TkaBaseline,
    MissingBmi,
    MissingKlg,
    MissingMri,
    Indeterminate,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Klg4Baseline => "klg4_baseline",
            ExclusionReason::TkaBaseline => "tka_baseline",
            ExclusionReason::MissingBmi => "missing_bmi",
            ExclusionReason::MissingKlg => "missing_klg",
            ExclusionReason::MissingMri => "missing_mri",
            ExclusionReason::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A knee that passed every exclusion rule, with its derived label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledKnee {
    pub record: KneeRecord,
    pub label: ProgressionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub record: KneeRecord,
    pub reason: ExclusionReason,
}

/// Applies the exclusion rules in a fixed order; the first matching rule is
/// the reported reason. `has_imaging` tells whether the knee's MRI exists.
pub fn apply_exclusions(
    records: &[KneeRecord],
    has_imaging: impl Fn(&KneeRecord) -> bool,
) -> (Vec<LabeledKnee>, Vec<Excluded>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in records {
        let reason = match r.baseline_klg() {
            None => Some(ExclusionReason::MissingKlg),
            Some(4) => Some(ExclusionReason::Klg4Baseline),
            Some(_) if r.tka_baseline => Some(ExclusionReason::TkaBaseline),
            Some(_) if r.bmi.is_none() => Some(ExclusionReason::MissingBmi),
            Some(_) if !has_imaging(r) => Some(ExclusionReason::MissingMri),
            Some(_) => None,
        };
        let reason = match reason {
            Some(reason) => reason,
            None => match derive_label(r) {
                Ok(LabelOutcome::Label(label)) => {
                    kept.push(LabeledKnee { record: r.clone(), label });
                    continue;
                }
                Ok(LabelOutcome::Indeterminate) => ExclusionReason::Indeterminate,
                Err(_) => ExclusionReason::MissingKlg,
            },
        };
        excluded.push(Excluded { record: r.clone(), reason });
    }
    (kept, excluded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::record::{Sex, Side};

    fn knee(id: &str, visits: &[(u32, u8)]) -> KneeRecord {
        KneeRecord {
            subject_id: id.into(),
            side: Side::R,
            institution_id: "A".into(),
            age: 55.0,
            sex: Sex::M,
            bmi: Some(28.0),
            tka_baseline: false,
            klg: visits.iter().copied().collect(),
        }
    }

    #[test]
    fn reasons() {
        let mut no_bmi = knee("b", &[(0, 1), (96, 1)]);
        no_bmi.bmi = None;
        let mut tka = knee("t", &[(0, 2), (96, 2)]);
        tka.tka_baseline = true;
        let records = vec![
            knee("k4", &[(0, 4), (96, 4)]),
            no_bmi,
            tka,
            knee("ok", &[(0, 2), (96, 3)]),
            knee("cens", &[(0, 2), (48, 2)]),
            knee("nomri", &[(0, 1), (96, 1)]),
            knee("noklg", &[(12, 1)]),
        ];
        let (kept, excluded) = apply_exclusions(&records, |r| r.subject_id != "nomri");
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].record.subject_id, "ok");
        let reasons: Vec<&str> = excluded.iter().map(|e| e.reason.as_str()).collect();
        assert_eq!(
            reasons,
            ["klg4_baseline", "missing_bmi", "tka_baseline", "indeterminate", "missing_mri", "missing_klg"]
        );
    }
}
