//! Ranking metrics, progression pooling, fold ensembles, bootstrap spread
//! and curve export.

mod metrics;
mod predict;
mod report;

pub use metrics::{
    average_precision, balanced_accuracy_and_confusion, pr_points, roc_auc, roc_points, threshold_points,
    trapezoid_auc, ThresholdPoint,
};
pub use predict::{ensemble_predict, pool_progression, PredictionSet};
pub use report::{
    bootstrap_spread, evaluate, export_curves, pooled_ap, pooled_auc, EvalReport, DEFAULT_BOOTSTRAP, SPREAD_METHOD,
};
