use super::forward::Forward;
use super::layers::{LayerNorm, Linear};
use super::params::{ParamId, Scope};
use super::trace::Tracer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub dim: usize,
    pub heads: usize,
    /// MLP hidden width is `mlp_ratio * dim`.
    pub mlp_ratio: f64,
    pub dropout: f64,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 {
            return Err(Error::config("attention dim and heads must be positive"));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "attention dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(Error::config(format!("mlp_ratio must be positive, got {}", self.mlp_ratio)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn mlp_hidden(&self) -> usize {
        ((self.dim as f64 * self.mlp_ratio).round() as usize).max(1)
    }
}

/// Scaled dot-product attention over `[L, d]` tokens with `h` heads.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub name: String,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(scope: &mut Scope, name: &str, dim: usize, heads: usize) -> Result<Self> {
        AttentionConfig {
            dim,
            heads,
            mlp_ratio: 1.0,
            dropout: 0.0,
        }
        .validate()?;
        let mut s = scope.sub(name);
        Ok(MultiHeadAttention {
            q: Linear::new(&mut s, "q", dim, dim)?,
            k: Linear::new(&mut s, "k", dim, dim)?,
            v: Linear::new(&mut s, "v", dim, dim)?,
            out: Linear::new(&mut s, "out", dim, dim)?,
            name: s.name().to_string(),
            heads,
            dim,
        })
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.ndim() != 2 || x.shape()[1] != self.dim {
            return Err(Error::Shape {
                op: "multi_head_attention",
                lhs: x.shape().to_vec(),
                rhs: vec![self.dim],
            });
        }
        Ok(())
    }

    fn heads_of(&self, f: &Forward, x: &Tensor) -> Result<Vec<(Tensor, Tensor, Tensor)>> {
        let (q, k, v) = (self.q.forward(f, x)?, self.k.forward(f, x)?, self.v.forward(f, x)?);
        let dh = self.dim / self.heads;
        (0..self.heads)
            .map(|h| {
                let r = h * dh..(h + 1) * dh;
                Ok((q.slice(1, r.start, r.end)?, k.slice(1, r.start, r.end)?, v.slice(1, r.start, r.end)?))
            })
            .collect()
    }

    fn weights(&self, q: &Tensor, k: &Tensor) -> Result<Tensor> {
        let dh = (self.dim / self.heads) as f64;
        q.matmul(&k.transpose()?)?.scale(1.0 / dh.sqrt()).softmax(1)
    }

    /// Per-head `[L, L]` attention matrices.
    pub fn attention_weights(&self, f: &Forward, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check(x)?;
        self.heads_of(f, x)?.iter().map(|(q, k, _)| self.weights(q, k)).collect()
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mixed = self
            .heads_of(f, x)?
            .iter()
            .map(|(q, k, v)| self.weights(q, k)?.matmul(v))
            .collect::<Result<Vec<_>>>()?;
        self.out.forward(f, &Tensor::concat(&mixed, 1)?)
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        self.q.trace(tr, input)?;
        self.k.trace(tr, input)?;
        self.v.trace(tr, input)?;
        let l = input[0] as u64;
        let score = 2 * l * l * self.dim as u64;
        tr.record(&format!("{}.scores", self.name), "attention_scores", input, input, &[], 0, score);
        self.out.trace(tr, input)
    }
}

/// Pre-norm Transformer block: `x + MHA(LN(x))`, then `+ MLP(LN(.))` with a
/// GELU MLP of width `mlp_ratio * d`.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub name: String,
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub dropout: f64,
}

impl TransformerBlock {
    pub fn new(scope: &mut Scope, name: &str, cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate()?;
        let mut s = scope.sub(name);
        let hidden = cfg.mlp_hidden();
        Ok(TransformerBlock {
            ln1: LayerNorm::new(&mut s, "ln1", cfg.dim)?,
            attn: MultiHeadAttention::new(&mut s, "attn", cfg.dim, cfg.heads)?,
            ln2: LayerNorm::new(&mut s, "ln2", cfg.dim)?,
            fc1: Linear::new(&mut s, "mlp.fc1", cfg.dim, hidden)?,
            fc2: Linear::new(&mut s, "mlp.fc2", hidden, cfg.dim)?,
            name: s.name().to_string(),
            dropout: cfg.dropout,
        })
    }

    /// Parameters whose zeroing turns the block into the identity.
    pub fn residual_outputs(&self) -> [ParamId; 4] {
        [self.attn.out.weight, self.attn.out.bias, self.fc2.weight, self.fc2.bias]
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        let a = self.attn.forward(f, &self.ln1.forward(f, x)?)?;
        let x = x.add(&f.dropout(&a, self.dropout))?;
        let m = self.fc1.forward(f, &self.ln2.forward(f, &x)?)?.gelu();
        let m = self.fc2.forward(f, &m)?;
        x.add(&f.dropout(&m, self.dropout))
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        let h = self.ln1.trace(tr, input)?;
        let h = self.attn.trace(tr, &h)?;
        let h = self.ln2.trace(tr, &h)?;
        let h = self.fc1.trace(tr, &h)?;
        self.fc2.trace(tr, &h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;

    fn tokens(l: usize, d: usize, phase: f64) -> Tensor {
        Tensor::new((0..l * d).map(|i| (i as f64 * 0.71 + phase).sin()).collect(), &[l, d]).unwrap()
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut store = ParamStore::new();
        let err = MultiHeadAttention::new(&mut Scope::root(&mut store), "a", 10, 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rows_sum_to_one() {
        let mut store = ParamStore::new();
        let a = MultiHeadAttention::new(&mut Scope::root(&mut store), "a", 8, 2).unwrap();
        store.materialize(5);
        for w in a.attention_weights(&Forward::eval(&store), &tokens(5, 8, 0.2)).unwrap() {
            for row in w.data().chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_token_is_linear_in_value() {
        // softmax over one key is 1, so output = out(v(x))
        let mut store = ParamStore::new();
        let a = MultiHeadAttention::new(&mut Scope::root(&mut store), "a", 8, 4).unwrap();
        store.materialize(9);
        let f = Forward::eval(&store);
        let x = tokens(1, 8, 1.0);
        let y = a.forward(&f, &x).unwrap();
        let direct = a.out.forward(&f, &a.v.forward(&f, &x).unwrap()).unwrap();
        for (p, q) in y.data().iter().zip(direct.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_tokens_permutes_outputs() {
        let mut store = ParamStore::new();
        let a = MultiHeadAttention::new(&mut Scope::root(&mut store), "a", 8, 2).unwrap();
        store.materialize(2);
        let f = Forward::eval(&store);
        let x = tokens(4, 8, 0.0);
        let perm = [2, 0, 3, 1];
        let y = a.forward(&f, &x).unwrap();
        let yp = a.forward(&f, &x.index_select(&perm).unwrap()).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..8 {
                assert!((yp.data()[i * 8 + j] - y.data()[p * 8 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeroed_residual_outputs_give_identity() {
        let cfg = AttentionConfig {
            dim: 8,
            heads: 2,
            mlp_ratio: 1.0,
            dropout: 0.1,
        };
        let mut store = ParamStore::new();
        let b = TransformerBlock::new(&mut Scope::root(&mut store), "blk", &cfg).unwrap();
        store.materialize(4);
        for id in b.residual_outputs() {
            store.value_mut(id).fill(0.0);
        }
        let x = tokens(6, 8, 0.5);
        let y = b.forward(&Forward::train(&store, 1), &x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }
}
