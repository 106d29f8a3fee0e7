//! Fits the fully connected head width to its parameter budget, breaks a
//! full-scale transformer down by layer and times a toy forward pass.

use volformer::arch::{Family, ModelConfig};
use volformer::profile::{profile_config, reconcile_hidden, time_inference, Timing, FC_PARAM_TARGET};

fn main() -> volformer::Result<()> {
    let rec = reconcile_hidden(&ModelConfig::full_scale(Family::Fc2d), FC_PARAM_TARGET, 0.10)?;
    println!("{} = {} gives {} parameters (target {:.0})", rec.field, rec.value, rec.achieved_params, rec.target_params);

    let report = profile_config(&ModelConfig::full_scale(Family::Trf2d))?;
    let mut layers = report.layers.clone();
    layers.sort_by_key(|l| std::cmp::Reverse(l.macs));
    println!("2d_trf: {:.1}M params, {:.1} GMACs, attention scores {:.3} GMACs", report.total_params as f64 / 1e6, report.total_macs as f64 / 1e9, report.attention_score_macs as f64 / 1e9);
    for l in layers.iter().take(6) {
        println!("  {:<40} {:>8.2} GMACs {:>10} params", l.name, l.macs as f64 / 1e9, l.params);
    }

    match time_inference(&ModelConfig::toy(Family::Trf2d), 3, 15, 0)? {
        Timing::Measured { median_ms, iqr_ms, hardware, .. } => {
            println!("toy 2d_trf forward: median {median_ms:.2} ms, IQR {iqr_ms:.2} ms on {hardware}")
        }
        Timing::NotRunnable { reason } => println!("not timed: {reason}"),
    }
    Ok(())
}
