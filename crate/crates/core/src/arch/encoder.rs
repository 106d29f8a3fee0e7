use super::config::EncoderSpec;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Bottleneck, Conv, Forward, ResidualConv2Plus1d, Scope, Tracer};
use crate::tensor::{output_extents, PoolKind, Tensor};

/// Residual unit used by an encoder's stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Bottleneck over 2-D slices.
    Bottleneck2d,
    /// Bottleneck over whole volumes.
    Bottleneck3d,
    /// Pair of factorized (2+1)D convs over whole volumes.
    Factorized,
}

impl BlockKind {
    fn rank(self) -> usize {
        match self {
            BlockKind::Bottleneck2d => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone)]
enum Block {
    Bottleneck(Bottleneck),
    Factorized(ResidualConv2Plus1d),
}

/// Stem (conv, batch norm, ReLU, optional 3x3 max pool), residual stages
/// with stride 2 on the first block of every stage after the first, then
/// global average pooling to `[N, out_dim]`. Bottlenecks widen by the
/// expansion factor; factorized blocks do not.
///
/// Volumetric stems use a `3 x k x k` kernel that strides only in-slice.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub name: String,
    pub kind: BlockKind,
    stem: Conv,
    stem_bn: BatchNorm,
    pool: Option<(Vec<usize>, Vec<usize>, Vec<usize>)>,
    blocks: Vec<Block>,
    pub out_dim: usize,
}

impl Encoder {
    pub fn new(scope: &mut Scope, name: &str, spec: &EncoderSpec, kind: BlockKind) -> Result<Self> {
        let mut s = scope.sub(name);
        let rank = kind.rank();
        let k = spec.stem_kernel;
        let (kernel, stride, pad) = if rank == 2 {
            (vec![k; 2], vec![spec.stem_stride; 2], vec![k / 2; 2])
        } else {
            (vec![3, k, k], vec![1, spec.stem_stride, spec.stem_stride], vec![1, k / 2, k / 2])
        };
        let stem = Conv::new(&mut s, "stem.conv", spec.in_channels, spec.stem_width, &kernel, &stride, &pad)?;
        let stem_bn = BatchNorm::new(&mut s, "stem.bn", spec.stem_width)?;
        let pool = spec.stem_pool.then(|| {
            if rank == 2 {
                (vec![3, 3], vec![2, 2], vec![1, 1])
            } else {
                (vec![1, 3, 3], vec![1, 2, 2], vec![0, 1, 1])
            }
        });
        let mut blocks = Vec::new();
        let mut ch = spec.stem_width;
        for (i, (&width, &count)) in spec.stage_widths.iter().zip(&spec.stage_blocks).enumerate() {
            for b in 0..count {
                let stride = if i > 0 && b == 0 { 2 } else { 1 };
                let bname = format!("layer{}.{b}", i + 1);
                let block = match kind {
                    BlockKind::Factorized => {
                        Block::Factorized(ResidualConv2Plus1d::new(&mut s, &bname, ch, width, stride)?)
                    }
                    _ => Block::Bottleneck(Bottleneck::new(&mut s, &bname, ch, width, spec.expansion, stride, rank)?),
                };
                ch = match kind {
                    BlockKind::Factorized => width,
                    _ => width * spec.expansion,
                };
                blocks.push(block);
            }
        }
        Ok(Encoder {
            name: s.name().to_string(),
            kind,
            stem,
            stem_bn,
            pool,
            blocks,
            out_dim: ch,
        })
    }

    pub fn rank(&self) -> usize {
        self.kind.rank()
    }

    /// `[N, C, spatial..]` to `[N, out_dim]`.
    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        if x.ndim() != self.rank() + 2 {
            return Err(Error::Shape {
                op: "encoder",
                lhs: x.shape().to_vec(),
                rhs: vec![self.rank() + 2],
            });
        }
        let mut h = self.stem_bn.forward(f, &self.stem.forward(f, x)?)?.relu();
        if let Some((w, s, p)) = &self.pool {
            h = h.pool(PoolKind::Max, w, s, p)?;
        }
        for b in &self.blocks {
            h = match b {
                Block::Bottleneck(b) => b.forward(f, &h)?,
                Block::Factorized(b) => b.forward(f, &h)?,
            };
        }
        h.global_avg_pool(self.rank())
    }

    /// Shapes are per instance, `[C, spatial..]`.
    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        let mut h = self.stem.trace(tr, input)?;
        h = self.stem_bn.trace(tr, &h)?;
        if let Some((w, s, p)) = &self.pool {
            let sp = output_extents(&h[1..], w, s, p)
                .map_err(|e| Error::config(format!("{}.stem.pool: {e}", self.name)))?;
            let out: Vec<usize> = std::iter::once(h[0]).chain(sp).collect();
            tr.record(&format!("{}.stem.pool", self.name), "max_pool", &h, &out, &[], 0, 0);
            h = out;
        }
        for b in &self.blocks {
            h = match b {
                Block::Bottleneck(b) => b.trace(tr, &h)?,
                Block::Factorized(b) => b.trace(tr, &h)?,
            };
        }
        let out = vec![h[0]];
        tr.record(&format!("{}.gap", self.name), "global_avg_pool", &h, &out, &[], 0, 0);
        Ok(out)
    }
}
