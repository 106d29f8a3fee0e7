use crate::data::View;
use crate::error::{Error, Result};
use crate::nn::{AttentionConfig, BiLstm, Forward, Init, LayerNorm, Linear, ParamId, Scope, Tracer, TransformerBlock};
use crate::tensor::Tensor;

const TOKEN_STD: f64 = 0.02;

/// Projects slice features to `d`, adds learned positional (and, with
/// several views, view) embeddings, prepends a class token, runs the blocks
/// and classifies the final class-token state.
#[derive(Debug, Clone)]
pub struct TransformerAggregator {
    pub proj: Linear,
    pub cls: ParamId,
    /// Per-view `[k_v, d]` positional tables.
    pub pos: Vec<(View, ParamId)>,
    /// Per-view `[d]` embeddings, present only with more than one view.
    pub view_emb: Vec<(View, ParamId)>,
    pub blocks: Vec<TransformerBlock>,
    pub norm: LayerNorm,
    pub head: Linear,
    pub dim: usize,
}

impl TransformerAggregator {
    pub fn new(
        scope: &mut Scope,
        feat_dim: usize,
        views: &[(View, usize)],
        cfg: &AttentionConfig,
        depth: usize,
        classes: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut s = scope.sub("aggregator");
        let d = cfg.dim;
        let proj = Linear::new(&mut s, "proj", feat_dim, d)?;
        let cls = s.param("cls_token", &[1, d], Init::Normal { std: TOKEN_STD })?;
        let mut pos = Vec::new();
        let mut view_emb = Vec::new();
        for &(v, k) in views {
            pos.push((v, s.param(&format!("pos_embed.{v}"), &[k, d], Init::Normal { std: TOKEN_STD })?));
            if views.len() > 1 {
                view_emb.push((v, s.param(&format!("view_embed.{v}"), &[d], Init::Normal { std: TOKEN_STD })?));
            }
        }
        let blocks = (0..depth)
            .map(|i| TransformerBlock::new(&mut s, &format!("blocks.{i}"), cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformerAggregator {
            proj,
            cls,
            pos,
            view_emb,
            blocks,
            norm: LayerNorm::new(&mut s, "norm", d)?,
            head: Linear::new(&mut s, "head", d, classes)?,
            dim: d,
        })
    }

    /// Token sequence `[1 + sum k_v, d]` before the blocks.
    pub fn tokens(&self, f: &Forward, features: &[(View, Tensor)]) -> Result<Tensor> {
        let mut parts = vec![f.param(self.cls)];
        for (v, feats) in features {
            let (_, pos) = self
                .pos
                .iter()
                .find(|(pv, _)| pv == v)
                .ok_or_else(|| Error::MissingView(v.to_string()))?;
            let mut t = self.proj.forward(f, feats)?.add(&f.param(*pos))?;
            if let Some((_, e)) = self.view_emb.iter().find(|(ev, _)| ev == v) {
                t = t.add_row(&f.param(*e))?;
            }
            parts.push(t);
        }
        Tensor::concat(&parts, 0)
    }

    /// Logits `[1, classes]` for one sample.
    pub fn forward(&self, f: &Forward, features: &[(View, Tensor)]) -> Result<Tensor> {
        let mut x = self.tokens(f, features)?;
        for b in &self.blocks {
            x = b.forward(f, &x)?;
        }
        let x = self.norm.forward(f, &x)?;
        self.head.forward(f, &x.slice(0, 0, 1)?)
    }

    pub fn trace(&self, tr: &mut Tracer, feat_dim: usize) -> Result<Vec<usize>> {
        let mut len = 1;
        for &(v, pos) in &self.pos {
            let k = tr_rows(tr, pos);
            self.proj.trace(tr, &[k, feat_dim])?;
            let mut ids = vec![pos];
            if let Some((_, e)) = self.view_emb.iter().find(|(ev, _)| *ev == v) {
                ids.push(*e);
            }
            tr.record(&format!("aggregator.embed.{v}"), "embedding", &[k, self.dim], &[k, self.dim], &ids, 0, 0);
            len += k;
        }
        tr.record("aggregator.cls_token", "embedding", &[1, self.dim], &[1, self.dim], &[self.cls], 0, 0);
        let mut h = vec![len, self.dim];
        for b in &self.blocks {
            h = b.trace(tr, &h)?;
        }
        self.norm.trace(tr, &h)?;
        self.head.trace(tr, &[1, self.dim])
    }
}

fn tr_rows(tr: &Tracer, id: ParamId) -> usize {
    tr.store().spec(id).shape[0]
}

/// Slice-major flatten of `[k, f]` to `k*f`, then FC, ReLU, FC.
#[derive(Debug, Clone)]
pub struct FcAggregator {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl FcAggregator {
    pub fn new(scope: &mut Scope, k: usize, feat_dim: usize, hidden: usize, classes: usize) -> Result<Self> {
        let mut s = scope.sub("aggregator");
        Ok(FcAggregator {
            fc1: Linear::new(&mut s, "fc1", k * feat_dim, hidden)?,
            fc2: Linear::new(&mut s, "fc2", hidden, classes)?,
        })
    }

    pub fn forward(&self, f: &Forward, features: &Tensor) -> Result<Tensor> {
        let flat = features.reshape(&[1, features.numel()])?;
        self.fc2.forward(f, &self.fc1.forward(f, &flat)?.relu())
    }

    pub fn trace(&self, tr: &mut Tracer) -> Result<Vec<usize>> {
        let h = self.fc1.trace(tr, &[1, self.fc1.in_dim])?;
        self.fc2.trace(tr, &h)
    }
}

/// Bidirectional LSTM over slices, terminal states into a linear head.
#[derive(Debug, Clone)]
pub struct LstmAggregator {
    pub lstm: BiLstm,
    pub head: Linear,
}

impl LstmAggregator {
    pub fn new(scope: &mut Scope, feat_dim: usize, hidden: usize, layers: usize, classes: usize) -> Result<Self> {
        let mut s = scope.sub("aggregator");
        Ok(LstmAggregator {
            lstm: BiLstm::new(&mut s, "lstm", feat_dim, hidden, layers)?,
            head: Linear::new(&mut s, "head", 2 * hidden, classes)?,
        })
    }

    pub fn forward(&self, f: &Forward, features: &Tensor) -> Result<Tensor> {
        self.head.forward(f, &self.lstm.forward(f, features)?)
    }

    pub fn trace(&self, tr: &mut Tracer, k: usize) -> Result<Vec<usize>> {
        let h = self.lstm.trace(tr, &[k, self.lstm.input_dim()])?;
        self.head.trace(tr, &h)
    }
}

#[derive(Debug, Clone)]
pub enum Aggregator {
    Transformer(TransformerAggregator),
    Fc(FcAggregator),
    Lstm(LstmAggregator),
    /// Volumetric families: a linear head on pooled volume features.
    Linear(Linear),
}
