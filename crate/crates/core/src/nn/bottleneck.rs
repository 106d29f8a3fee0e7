use super::forward::Forward;
use super::layers::{BatchNorm, Conv};
use super::params::Scope;
use super::trace::Tracer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Residual bottleneck: 1x1 reduce, 3x3 (strided), 1x1 expand, each followed
/// by batch norm; ReLU after the first two and after the residual sum. The
/// stride sits on the 3x3 conv. Works on 2-D slices or 3-D volumes.
#[derive(Debug, Clone)]
pub struct Bottleneck {
    pub name: String,
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    conv3: Conv,
    bn3: BatchNorm,
    shortcut: Option<(Conv, BatchNorm)>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Bottleneck {
    pub fn new(
        scope: &mut Scope,
        name: &str,
        in_channels: usize,
        width: usize,
        expansion: usize,
        stride: usize,
        rank: usize,
    ) -> Result<Self> {
        if !(1..=2).contains(&stride) {
            return Err(Error::config(format!("{name}: stride must be 1 or 2, got {stride}")));
        }
        if width == 0 || expansion == 0 || in_channels == 0 {
            return Err(Error::config(format!(
                "{name}: invalid widths (in {in_channels}, width {width}, expansion {expansion})"
            )));
        }
        if !(2..=3).contains(&rank) {
            return Err(Error::config(format!("{name}: spatial rank must be 2 or 3")));
        }
        let out = width * expansion;
        let mut s = scope.sub(name);
        let (one, three) = (vec![1; rank], vec![3; rank]);
        let (unit, zero, pad1) = (vec![1; rank], vec![0; rank], vec![1; rank]);
        let strided = vec![stride; rank];
        let conv1 = Conv::new(&mut s, "conv1", in_channels, width, &one, &unit, &zero)?;
        let bn1 = BatchNorm::new(&mut s, "bn1", width)?;
        let conv2 = Conv::new(&mut s, "conv2", width, width, &three, &strided, &pad1)?;
        let bn2 = BatchNorm::new(&mut s, "bn2", width)?;
        let conv3 = Conv::new(&mut s, "conv3", width, out, &one, &unit, &zero)?;
        let bn3 = BatchNorm::new(&mut s, "bn3", out)?;
        let shortcut = if stride != 1 || in_channels != out {
            let mut d = s.sub("downsample");
            Some((
                Conv::new(&mut d, "conv", in_channels, out, &one, &strided, &zero)?,
                BatchNorm::new(&mut d, "bn", out)?,
            ))
        } else {
            None
        };
        Ok(Bottleneck {
            name: s.name().to_string(),
            conv1,
            bn1,
            conv2,
            bn2,
            conv3,
            bn3,
            shortcut,
            in_channels,
            out_channels: out,
        })
    }

    /// `x` is `[N, C, spatial..]`.
    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        let h = self.bn1.forward(f, &self.conv1.forward(f, x)?)?.relu();
        let h = self.bn2.forward(f, &self.conv2.forward(f, &h)?)?.relu();
        let h = self.bn3.forward(f, &self.conv3.forward(f, &h)?)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(f, &conv.forward(f, x)?)?,
            None => x.clone(),
        };
        Ok(h.add(&skip)?.relu())
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        let h = self.conv1.trace(tr, input)?;
        let h = self.bn1.trace(tr, &h)?;
        let h = self.conv2.trace(tr, &h)?;
        let h = self.bn2.trace(tr, &h)?;
        let h = self.conv3.trace(tr, &h)?;
        let h = self.bn3.trace(tr, &h)?;
        if let Some((conv, bn)) = &self.shortcut {
            let s = conv.trace(tr, input)?;
            bn.trace(tr, &s)?;
        }
        Ok(h)
    }
}
