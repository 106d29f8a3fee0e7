use std::collections::HashSet;

use serde::Serialize;

use super::params::{ParamId, ParamStore};

/// One row of a static cost walk over a model.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LayerCost {
    pub name: String,
    pub kind: String,
    /// Per-instance shapes, without batch dimension.
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    /// Trainable parameters first seen at this layer (shared weights count once).
    pub params: u64,
    /// Total multiply-accumulates over all instances, score terms included.
    pub macs: u64,
    /// Attention score (`QK^T`) and value-mixing (`AV`) part of `macs`.
    pub attention_score_macs: u64,
    /// How many times the layer runs per sample (e.g. once per slice).
    pub instances: u64,
}

/// Walks layer shapes without touching parameter values.
pub struct Tracer<'a> {
    store: &'a ParamStore,
    layers: Vec<LayerCost>,
    seen: HashSet<ParamId>,
    instances: u64,
}

impl<'a> Tracer<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tracer {
            store,
            layers: Vec::new(),
            seen: HashSet::new(),
            instances: 1,
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Runs `f` with every recorded layer repeated `n` more times.
    pub fn repeated<R>(&mut self, n: u64, f: impl FnOnce(&mut Self) -> R) -> R {
        let prev = self.instances;
        self.instances *= n;
        let out = f(self);
        self.instances = prev;
        out
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        name: &str,
        kind: &str,
        input: &[usize],
        output: &[usize],
        params: &[ParamId],
        macs: u64,
        score_macs: u64,
    ) {
        let mut fresh = 0;
        for &id in params {
            let spec = self.store.spec(id);
            if spec.trainable && self.seen.insert(id) {
                fresh += spec.numel() as u64;
            }
        }
        self.layers.push(LayerCost {
            name: name.to_string(),
            kind: kind.to_string(),
            input_shape: input.to_vec(),
            output_shape: output.to_vec(),
            params: fresh,
            macs: (macs + score_macs) * self.instances,
            attention_score_macs: score_macs * self.instances,
            instances: self.instances,
        });
    }

    /// Parameters registered but never reached by the walk.
    pub fn untraced_params(&self) -> u64 {
        self.store
            .ids()
            .filter(|id| !self.seen.contains(id))
            .map(|id| self.store.spec(id))
            .filter(|s| s.trainable)
            .map(|s| s.numel() as u64)
            .sum()
    }

    pub fn finish(self) -> Vec<LayerCost> {
        self.layers
    }
}
