use std::fmt;

use serde::{Deserialize, Serialize};

use super::record::KneeRecord;
use crate::error::{Error, Result};

/// Last month of the fast-progression window.
pub const FAST_WINDOW: u32 = 72;
/// Last month of the follow-up horizon.
pub const HORIZON: u32 = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgressionClass {
    None = 0,
    Slow = 1,
    Fast = 2,
}

impl ProgressionClass {
    pub const ALL: [ProgressionClass; 3] = [ProgressionClass::None, ProgressionClass::Slow, ProgressionClass::Fast];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn progresses(self) -> bool {
        self != ProgressionClass::None
    }
}

impl fmt::Display for ProgressionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProgressionClass::None => "none",
            ProgressionClass::Slow => "slow",
            ProgressionClass::Fast => "fast",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionLabel {
    pub class: ProgressionClass,
    pub event_month: Option<u32>,
    /// Which rule decided the class.
    pub rule_trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelOutcome {
    Label(ProgressionLabel),
    /// No qualifying increase seen and no observation at the horizon.
    Indeterminate,
}

impl LabelOutcome {
    pub fn class(&self) -> Option<ProgressionClass> {
        match self {
            LabelOutcome::Label(l) => Some(l.class),
            LabelOutcome::Indeterminate => None,
        }
    }
}

/// Progression event: the first follow-up visit whose grade exceeds the
/// baseline grade, except that a rise from KL0 to KL1 does not count.
/// Decreases are ignored and never move the baseline. Events after the
/// horizon are ignored.
pub fn derive_label(r: &KneeRecord) -> Result<LabelOutcome> {
    let base = r
        .baseline_klg()
        .ok_or_else(|| Error::Usage(format!("{}: baseline KLG missing", r.knee_id())))?;
    if base >= 4 {
        return Err(Error::Usage(format!("{}: baseline KLG 4 cannot progress", r.knee_id())));
    }
    let mut skipped_kl1 = false;
    for (&month, &grade) in r.klg.range(1..=HORIZON) {
        if grade <= base {
            continue;
        }
        if base == 0 && grade == 1 {
            skipped_kl1 = true;
            continue;
        }
        let class = if month <= FAST_WINDOW {
            ProgressionClass::Fast
        } else {
            ProgressionClass::Slow
        };
        return Ok(LabelOutcome::Label(ProgressionLabel {
            class,
            event_month: Some(month),
            rule_trace: format!("{class}: KL{base}->KL{grade} at month {month}"),
        }));
    }
    if r.klg.contains_key(&HORIZON) {
        let rule_trace = if skipped_kl1 {
            format!("none: only KL0->KL1 by month {HORIZON}")
        } else {
            format!("none: no increase by month {HORIZON}")
        };
        return Ok(LabelOutcome::Label(ProgressionLabel {
            class: ProgressionClass::None,
            event_month: None,
            rule_trace,
        }));
    }
    Ok(LabelOutcome::Indeterminate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::record::{Sex, Side};
    use std::collections::BTreeMap;

    pub(crate) fn knee(visits: &[(u32, u8)]) -> KneeRecord {
        KneeRecord {
            subject_id: "S".into(),
            side: Side::L,
            institution_id: "A".into(),
            age: 60.0,
            sex: Sex::F,
            bmi: Some(25.0),
            tka_baseline: false,
            klg: visits.iter().copied().collect::<BTreeMap<_, _>>(),
        }
    }

    fn class(visits: &[(u32, u8)]) -> Option<ProgressionClass> {
        derive_label(&knee(visits)).unwrap().class()
    }

    #[test]
    fn clause_examples() {
        assert_eq!(class(&[(0, 0), (48, 1), (96, 1)]), Some(ProgressionClass::None));
        assert_eq!(class(&[(0, 1), (24, 2)]), Some(ProgressionClass::Fast));
        assert_eq!(class(&[(0, 2), (84, 3)]), Some(ProgressionClass::Slow));
        assert_eq!(class(&[(0, 0), (24, 1), (84, 2)]), Some(ProgressionClass::Slow));
    }

    #[test]
    fn censoring_and_preconditions() {
        assert_eq!(class(&[(0, 1), (48, 1)]), None);
        assert!(derive_label(&knee(&[(12, 1)])).is_err());
        assert!(derive_label(&knee(&[(0, 4), (96, 4)])).is_err());
        // boundary months
        assert_eq!(class(&[(0, 1), (72, 2)]), Some(ProgressionClass::Fast));
        assert_eq!(class(&[(0, 1), (96, 2)]), Some(ProgressionClass::Slow));
        assert_eq!(class(&[(0, 1), (96, 1), (108, 3)]), Some(ProgressionClass::None));
    }

    #[test]
    fn regression_does_not_reset_baseline() {
        assert_eq!(class(&[(0, 2), (12, 1), (24, 2), (96, 2)]), Some(ProgressionClass::None));
    }
}
