use super::forward::Forward;
use super::layers::{BatchNorm, Conv};
use super::params::Scope;
use super::trace::Tracer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Intermediate width that gives a 1x3x3 + 3x1x1 pair the parameter count of
/// one 3x3x3 conv: `floor(27 Ci Co / (9 Ci + 3 Co))`.
pub fn intermediate_width(c_in: usize, c_out: usize) -> usize {
    (27 * c_in * c_out / (9 * c_in + 3 * c_out)).max(1)
}

/// Factorized 3-D conv over `[N, C, D, H, W]`: in-slice 1x3x3, batch norm,
/// ReLU, then through-plane 3x1x1. Padding keeps the extents of a padded
/// 3x3x3 conv with the same stride.
#[derive(Debug, Clone)]
pub struct Conv2Plus1d {
    pub name: String,
    spatial: Conv,
    bn: BatchNorm,
    temporal: Conv,
    pub mid: usize,
}

impl Conv2Plus1d {
    pub fn new(scope: &mut Scope, name: &str, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 || !(1..=2).contains(&stride) {
            return Err(Error::config(format!(
                "{name}: invalid (2+1)D widths {c_in}->{c_out} or stride {stride}"
            )));
        }
        let mid = intermediate_width(c_in, c_out);
        let mut s = scope.sub(name);
        let spatial = Conv::new(&mut s, "spatial", c_in, mid, &[1, 3, 3], &[1, stride, stride], &[0, 1, 1])?;
        let bn = BatchNorm::new(&mut s, "bn", mid)?;
        let temporal = Conv::new(&mut s, "temporal", mid, c_out, &[3, 1, 1], &[stride, 1, 1], &[1, 0, 0])?;
        Ok(Conv2Plus1d {
            name: s.name().to_string(),
            spatial,
            bn,
            temporal,
            mid,
        })
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        if x.ndim() != 5 {
            return Err(Error::config(format!(
                "{}: expects [N, C, D, H, W], got {:?}",
                self.name,
                x.shape()
            )));
        }
        let h = self.bn.forward(f, &self.spatial.forward(f, x)?)?.relu();
        self.temporal.forward(f, &h)
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        let h = self.spatial.trace(tr, input)?;
        let h = self.bn.trace(tr, &h)?;
        self.temporal.trace(tr, &h)
    }
}

/// Two (2+1)D convs with batch norm and a residual connection.
#[derive(Debug, Clone)]
pub struct ResidualConv2Plus1d {
    pub name: String,
    a: Conv2Plus1d,
    bn_a: BatchNorm,
    b: Conv2Plus1d,
    bn_b: BatchNorm,
    shortcut: Option<(Conv, BatchNorm)>,
}

impl ResidualConv2Plus1d {
    pub fn new(scope: &mut Scope, name: &str, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        let a = Conv2Plus1d::new(&mut s, "a", c_in, c_out, stride)?;
        let bn_a = BatchNorm::new(&mut s, "bn_a", c_out)?;
        let b = Conv2Plus1d::new(&mut s, "b", c_out, c_out, 1)?;
        let bn_b = BatchNorm::new(&mut s, "bn_b", c_out)?;
        let shortcut = if stride != 1 || c_in != c_out {
            let mut d = s.sub("downsample");
            Some((
                Conv::new(&mut d, "conv", c_in, c_out, &[1, 1, 1], &[stride; 3], &[0; 3])?,
                BatchNorm::new(&mut d, "bn", c_out)?,
            ))
        } else {
            None
        };
        Ok(ResidualConv2Plus1d {
            name: s.name().to_string(),
            a,
            bn_a,
            b,
            bn_b,
            shortcut,
        })
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        let h = self.bn_a.forward(f, &self.a.forward(f, x)?)?.relu();
        let h = self.bn_b.forward(f, &self.b.forward(f, &h)?)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(f, &conv.forward(f, x)?)?,
            None => x.clone(),
        };
        Ok(h.add(&skip)?.relu())
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        let h = self.a.trace(tr, input)?;
        let h = self.bn_a.trace(tr, &h)?;
        let h = self.b.trace(tr, &h)?;
        let h = self.bn_b.trace(tr, &h)?;
        if let Some((conv, bn)) = &self.shortcut {
            let s = conv.trace(tr, input)?;
            bn.trace(tr, &s)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::tensor::output_extents;

    #[test]
    fn width_matches_full_conv_count() {
        assert_eq!(intermediate_width(4, 4), 9);
        assert_eq!(intermediate_width(64, 64), 144);
        // 9*Ci*M + 3*M*Co <= 27*Ci*Co < 9*Ci*(M+1) + 3*(M+1)*Co
        for (ci, co) in [(3, 5), (16, 32), (7, 2)] {
            let m = intermediate_width(ci, co);
            assert!(9 * ci * m + 3 * m * co <= 27 * ci * co);
            assert!(9 * ci * (m + 1) + 3 * (m + 1) * co > 27 * ci * co);
        }
    }

    #[test]
    fn output_matches_padded_full_conv_shape() {
        let mut store = ParamStore::new();
        for stride in [1, 2] {
            let c = Conv2Plus1d::new(&mut Scope::root(&mut store), &format!("c{stride}"), 2, 3, stride).unwrap();
            let mut tr = Tracer::new(&store);
            let out = c.trace(&mut tr, &[2, 5, 7, 6]).unwrap();
            let full = output_extents(&[5, 7, 6], &[3, 3, 3], &[stride; 3], &[1, 1, 1]).unwrap();
            assert_eq!(&out[1..], &full[..]);
        }
    }

    #[test]
    fn rejects_unbatched_input() {
        let mut store = ParamStore::new();
        let c = Conv2Plus1d::new(&mut Scope::root(&mut store), "c", 2, 2, 1).unwrap();
        store.materialize(0);
        let x = Tensor::zeros(&[2, 3, 4, 4]);
        assert!(c.forward(&Forward::eval(&store), &x).is_err());
    }
}
