use super::forward::{BnUpdate, Forward};
use super::params::{Init, ParamId, Scope};
use super::trace::Tracer;
use crate::error::{Error, Result};
use crate::tensor::{output_extents, Tensor};

/// `y = x W + b` on `[n, in]` rows; `W` is stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(scope: &mut Scope, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        let weight = s.param(
            "weight",
            &[in_dim, out_dim],
            Init::Xavier {
                fan_in: in_dim,
                fan_out: out_dim,
            },
        )?;
        let bias = s.param("bias", &[out_dim], Init::Zeros)?;
        Ok(Linear {
            name: s.name().to_string(),
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        x.matmul(&f.param(self.weight))?.add_row(&f.param(self.bias))
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 2 || input[1] != self.in_dim {
            return Err(Error::config(format!(
                "{}: expects [n, {}] input, got {input:?}",
                self.name, self.in_dim
            )));
        }
        let out = vec![input[0], self.out_dim];
        let macs = (input[0] * self.in_dim * self.out_dim) as u64;
        tr.record(&self.name, "linear", input, &out, &[self.weight, self.bias], macs, 0);
        Ok(out)
    }
}

/// N-d convolution without bias (always followed by batch norm here).
#[derive(Debug, Clone)]
pub struct Conv {
    pub name: String,
    pub weight: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
}

impl Conv {
    pub fn new(
        scope: &mut Scope,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: &[usize],
        stride: &[usize],
        padding: &[usize],
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::config(format!("{name}: zero channel width")));
        }
        if kernel.len() != stride.len() || kernel.len() != padding.len() {
            return Err(Error::config(format!("{name}: kernel/stride/padding ranks differ")));
        }
        let mut s = scope.sub(name);
        let mut shape = vec![out_channels, in_channels];
        shape.extend_from_slice(kernel);
        let fan_in = in_channels * kernel.iter().product::<usize>();
        let weight = s.param("weight", &shape, Init::HeNormal { fan_in })?;
        Ok(Conv {
            name: s.name().to_string(),
            weight,
            in_channels,
            out_channels,
            kernel: kernel.to_vec(),
            stride: stride.to_vec(),
            padding: padding.to_vec(),
        })
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        x.conv(&f.param(self.weight), None, &self.stride, &self.padding)
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != self.kernel.len() + 1 || input[0] != self.in_channels {
            return Err(Error::config(format!(
                "{}: expects {} channels and {} spatial dims, got {input:?}",
                self.name,
                self.in_channels,
                self.kernel.len()
            )));
        }
        let spatial = output_extents(&input[1..], &self.kernel, &self.stride, &self.padding)
            .map_err(|e| Error::config(format!("{}: {e}", self.name)))?;
        let mut out = vec![self.out_channels];
        out.extend_from_slice(&spatial);
        let macs = self.kernel.iter().product::<usize>()
            * self.in_channels
            * self.out_channels
            * spatial.iter().product::<usize>();
        tr.record(&self.name, "conv", input, &out, &[self.weight], macs as u64, 0);
        Ok(out)
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch norm over `[N, C, spatial..]`.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(scope: &mut Scope, name: &str, channels: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(BatchNorm {
            gamma: s.param("weight", &[channels], Init::Ones)?,
            beta: s.param("bias", &[channels], Init::Zeros)?,
            running_mean: s.buffer("running_mean", &[channels], Init::Zeros)?,
            running_var: s.buffer("running_var", &[channels], Init::Ones)?,
            name: s.name().to_string(),
            channels,
        })
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        let (g, b) = (f.param(self.gamma), f.param(self.beta));
        if f.is_train() {
            let (y, mean, var) = x.batch_norm(&g, &b, BN_EPS)?;
            f.push_bn_update(BnUpdate {
                running_mean: self.running_mean,
                running_var: self.running_var,
                mean,
                var,
            });
            Ok(y)
        } else {
            x.batch_norm_eval(&g, &b, f.buffer(self.running_mean), f.buffer(self.running_var), BN_EPS)
        }
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        if input.first() != Some(&self.channels) {
            return Err(Error::config(format!("{}: channel mismatch {input:?}", self.name)));
        }
        tr.record(&self.name, "batch_norm", input, input, &[self.gamma, self.beta], 0, 0);
        Ok(input.to_vec())
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Layer norm over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(scope: &mut Scope, name: &str, dim: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(LayerNorm {
            gamma: s.param("weight", &[dim], Init::Ones)?,
            beta: s.param("bias", &[dim], Init::Zeros)?,
            name: s.name().to_string(),
            dim,
        })
    }

    pub fn forward(&self, f: &Forward, x: &Tensor) -> Result<Tensor> {
        let axis = x.ndim() - 1;
        x.layer_norm(axis, Some(&f.param(self.gamma)), Some(&f.param(self.beta)), LN_EPS)
    }

    pub fn trace(&self, tr: &mut Tracer, input: &[usize]) -> Result<Vec<usize>> {
        if input.last() != Some(&self.dim) {
            return Err(Error::config(format!("{}: width mismatch {input:?}", self.name)));
        }
        tr.record(&self.name, "layer_norm", input, input, &[self.gamma, self.beta], 0, 0);
        Ok(input.to_vec())
    }
}
