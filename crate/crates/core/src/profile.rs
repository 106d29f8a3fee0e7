//! Analytic cost counting and wall-clock inference timing.
//!
//! MAC conventions: convolution `K_vol * C_in * C_out * out_vol`; linear
//! `in * out` per row; attention `4 L d^2` for the projections (counted as
//! four linear layers) plus `2 L^2 d` for scores and value mixing. Norms,
//! activations, pooling and embeddings count as zero.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arch::{build_model, Family, Model, ModelConfig, StackShape, Views};
use crate::data::View;
use crate::error::{Error, Result};
use crate::nn::{Forward, LayerCost};
use crate::tensor::Tensor;

pub const MAC_CONVENTION: &str =
    "conv: Kvol*Cin*Cout*out_vol; linear: in*out per row; attention: 4*L*d^2 + 2*L^2*d; norm/activation/pool/embedding: 0";

/// Parameter budget the FC aggregator's hidden width is fitted to.
pub const FC_PARAM_TARGET: f64 = 91e6;
/// Parameter budget the Bi-LSTM hidden width is fitted to.
pub const LSTM_PARAM_TARGET: f64 = 29e6;

#[derive(Debug, Clone, Serialize)]
pub struct Reconciliation {
    pub field: String,
    pub value: usize,
    pub target_params: f64,
    pub achieved_params: u64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Timing {
    Measured {
        median_ms: f64,
        iqr_ms: f64,
        warmup: usize,
        runs: usize,
        hardware: String,
    },
    NotRunnable {
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub family: Family,
    pub input: BTreeMap<View, StackShape>,
    pub layers: Vec<LayerCost>,
    pub total_params: u64,
    pub total_macs: u64,
    pub attention_score_macs: u64,
    pub macs_without_scores: u64,
    pub mac_convention: String,
    pub reconciliation: Vec<Reconciliation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

/// Per-layer MACs and parameters; pure in the configuration.
pub fn count_macs(model: &Model) -> Result<CostReport> {
    let layers = model.layers()?;
    let total_params = layers.iter().map(|l| l.params).sum();
    let total_macs: u64 = layers.iter().map(|l| l.macs).sum();
    let attention_score_macs: u64 = layers.iter().map(|l| l.attention_score_macs).sum();
    Ok(CostReport {
        family: model.cfg.family,
        input: model.cfg.inputs.clone(),
        layers,
        total_params,
        total_macs,
        attention_score_macs,
        macs_without_scores: total_macs - attention_score_macs,
        mac_convention: MAC_CONVENTION.to_string(),
        reconciliation: Vec::new(),
        timing: None,
    })
}

/// Trainable parameter total, including tokens and positional tables.
pub fn count_params(model: &Model) -> u64 {
    model.param_count()
}

/// Cost report for a configuration without allocating its weights.
pub fn profile_config(cfg: &ModelConfig) -> Result<CostReport> {
    count_macs(&Model::plan(cfg)?)
}

/// Smallest power-of-two hidden width (FC or LSTM, by family) whose model
/// total lies within `tol` (relative) of `target`.
pub fn reconcile_hidden(base: &ModelConfig, target: f64, tol: f64) -> Result<Reconciliation> {
    let field = match base.family {
        Family::Fc2d => "fc_hidden",
        Family::BiLstm2d => "lstm_hidden",
        f => return Err(Error::config(format!("{f} has no hidden width to reconcile"))),
    };
    for p in 0..=20 {
        let h = 1usize << p;
        let mut cfg = base.clone();
        match base.family {
            Family::Fc2d => cfg.fc_hidden = h,
            _ => cfg.lstm_hidden = h,
        }
        let n = Model::plan(&cfg)?.param_count();
        if (n as f64 / target - 1.0).abs() <= tol {
            return Ok(Reconciliation {
                field: field.to_string(),
                value: h,
                target_params: target,
                achieved_params: n,
            });
        }
        if n as f64 > target * (1.0 + tol) {
            break;
        }
    }
    Err(Error::config(format!(
        "no power-of-two {field} brings {} within {tol} of {target}",
        base.family
    )))
}

/// Random single-sample input matching the configuration.
pub fn random_input(cfg: &ModelConfig, seed: u64) -> Result<Views> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cfg.views
        .iter()
        .map(|&v| {
            let s = cfg.input(v)?;
            let shape = [s.slices, cfg.encoder.in_channels, s.height, s.width];
            let n = shape.iter().product();
            Ok((v, Tensor::new((0..n).map(|_| rng.random::<f64>()).collect(), &shape)?))
        })
        .collect()
}

/// Above this many MACs per sample a timing run is skipped.
pub const TIMING_MAC_LIMIT: u64 = 20_000_000_000;

pub fn hardware_descriptor() -> String {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{}, {threads} hardware threads, f64 cpu", std::env::consts::ARCH, std::env::consts::OS)
}

/// Median and interquartile range of single-sample eval forwards after
/// `warmup` untimed runs.
pub fn time_inference(cfg: &ModelConfig, warmup: usize, runs: usize, seed: u64) -> Result<Timing> {
    if runs == 0 {
        return Err(Error::config("timing needs at least one run"));
    }
    let report = profile_config(cfg)?;
    if report.total_macs > TIMING_MAC_LIMIT {
        return Ok(Timing::NotRunnable {
            reason: format!(
                "not runnable at this scale: {:.1}e9 MACs per sample exceeds the {:.0}e9 timing limit",
                report.total_macs as f64 / 1e9,
                TIMING_MAC_LIMIT as f64 / 1e9
            ),
        });
    }
    let model = build_model(cfg, seed)?;
    let input = random_input(cfg, seed)?;
    let batch = [input];
    for _ in 0..warmup {
        model.logits(&Forward::eval(&model.store), &batch)?;
    }
    let mut ms: Vec<f64> = (0..runs)
        .map(|_| {
            let t = Instant::now();
            model.logits(&Forward::eval(&model.store), &batch)?;
            Ok(t.elapsed().as_secs_f64() * 1e3)
        })
        .collect::<Result<_>>()?;
    ms.sort_by(f64::total_cmp);
    Ok(Timing::Measured {
        median_ms: quantile(&ms, 0.5),
        iqr_ms: quantile(&ms, 0.75) - quantile(&ms, 0.25),
        warmup,
        runs,
        hardware: hardware_descriptor(),
    })
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
