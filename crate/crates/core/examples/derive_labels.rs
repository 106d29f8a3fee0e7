//! Derives progression labels from KL-grade trajectories and applies the
//! cohort exclusion rules.

use std::collections::BTreeMap;

use volformer::cohort::{apply_exclusions, derive_label, KneeRecord, LabelOutcome, Sex, Side};

fn knee(id: &str, tka: bool, klg: &[(u32, u8)]) -> KneeRecord {
    KneeRecord {
        subject_id: id.into(),
        side: Side::L,
        institution_id: "INST2".into(),
        age: 61.0,
        sex: Sex::F,
        bmi: Some(27.5),
        tka_baseline: tka,
        klg: klg.iter().copied().collect::<BTreeMap<_, _>>(),
    }
}

fn main() {
    let records = vec![
        knee("fast", false, &[(0, 2), (12, 2), (24, 3), (48, 3), (96, 4)]),
        knee("slow", false, &[(0, 1), (12, 1), (48, 1), (72, 1), (96, 2)]),
        knee("none", false, &[(0, 0), (24, 1), (96, 1)]),
        knee("gap", false, &[(0, 2), (12, 2), (48, 2)]),
        knee("end-stage", false, &[(0, 4), (96, 4)]),
        knee("replaced", true, &[(0, 3), (96, 3)]),
    ];

    for r in &records {
        match derive_label(r) {
            Ok(LabelOutcome::Label(l)) => {
                println!("{:<10} {} (event month {:?}): {}", r.subject_id, l.class, l.event_month, l.rule_trace)
            }
            Ok(LabelOutcome::Indeterminate) => println!("{:<10} indeterminate", r.subject_id),
            Err(e) => println!("{:<10} rejected: {e}", r.subject_id),
        }
    }

    let (kept, excluded) = apply_exclusions(&records, |_| true);
    println!("kept {}:", kept.len());
    for k in &kept {
        println!("  {} {}", k.record.knee_id(), k.label.class);
    }
    println!("excluded {}:", excluded.len());
    for e in &excluded {
        println!("  {} {}", e.record.knee_id(), e.reason.as_str());
    }
}
