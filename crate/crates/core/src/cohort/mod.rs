//! Cohort records, progression labels, exclusions and fold assignment.

mod exclude;
mod label;
mod record;
mod split;

pub use exclude::{apply_exclusions, ExclusionReason, Excluded, LabeledKnee};
pub use label::{derive_label, LabelOutcome, ProgressionClass, ProgressionLabel, FAST_WINDOW, HORIZON};
pub use record::{load_cohort, parse_cohort, write_cohort, KneeRecord, Sex, Side, VISITS};
pub use split::{resample_balance, split_dataset, Splits};
