use super::gemm::gemm;
use super::{kink_tracking, record_kinks, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Spatial geometry lifted to exactly three dims (leading dims of extent 1).
#[derive(Debug, Clone, Copy)]
struct Geom {
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    out: [usize; 3],
}

impl Geom {
    fn new(input: &[usize], kernel: &[usize], stride: &[usize], pad: &[usize], op: &'static str) -> Result<Self> {
        let n = input.len();
        if !(1..=3).contains(&n) || kernel.len() != n || stride.len() != n || pad.len() != n {
            return Err(Error::config(format!(
                "{op}: rank mismatch (input {input:?}, kernel {kernel:?}, stride {stride:?}, padding {pad:?})"
            )));
        }
        let lift = |v: &[usize], fill: usize| {
            let mut out = [fill; 3];
            out[3 - n..].copy_from_slice(v);
            out
        };
        let (input, kernel, stride, pad) = (lift(input, 1), lift(kernel, 1), lift(stride, 1), lift(pad, 0));
        let mut out = [0; 3];
        for i in 0..3 {
            if stride[i] == 0 || kernel[i] == 0 {
                return Err(Error::config(format!("{op}: zero stride or kernel extent")));
            }
            let padded = input[i] + 2 * pad[i];
            if padded < kernel[i] {
                return Err(Error::config(format!(
                    "{op}: window {kernel:?} larger than padded input {input:?} (padding {pad:?}); non-positive output extent"
                )));
            }
            out[i] = (padded - kernel[i]) / stride[i] + 1;
        }
        Ok(Geom {
            input,
            kernel,
            stride,
            pad,
            out,
        })
    }

    fn in_vol(&self) -> usize {
        self.input.iter().product()
    }
    fn k_vol(&self) -> usize {
        self.kernel.iter().product()
    }
    fn out_vol(&self) -> usize {
        self.out.iter().product()
    }
    fn is_pointwise(&self) -> bool {
        self.k_vol() == 1 && self.stride == [1; 3] && self.pad == [0; 3]
    }

    /// Input coordinate for output `o` and kernel offset `k` along `axis`.
    #[inline]
    fn src(&self, axis: usize, o: usize, k: usize) -> Option<usize> {
        let p = (o * self.stride[axis] + k) as isize - self.pad[axis] as isize;
        (p >= 0 && (p as usize) < self.input[axis]).then_some(p as usize)
    }

    /// `cols[(c, k0, k1, k2), (o0, o1, o2)]` for one sample.
    fn im2col(&self, channels: usize, x: &[f64], cols: &mut [f64]) {
        let [i0, i1, i2] = self.input;
        let [o0, o1, o2] = self.out;
        let p = self.out_vol();
        let mut row = 0;
        for c in 0..channels {
            let xc = &x[c * i0 * i1 * i2..];
            for k0 in 0..self.kernel[0] {
                for k1 in 0..self.kernel[1] {
                    for k2 in 0..self.kernel[2] {
                        let dst = &mut cols[row * p..(row + 1) * p];
                        let mut q = 0;
                        for a in 0..o0 {
                            let s0 = self.src(0, a, k0);
                            for b in 0..o1 {
                                let s1 = self.src(1, b, k1);
                                match (s0, s1) {
                                    (Some(s0), Some(s1)) => {
                                        let base = (s0 * i1 + s1) * i2;
                                        for c2 in 0..o2 {
                                            dst[q] = match self.src(2, c2, k2) {
                                                Some(s2) => xc[base + s2],
                                                None => 0.0,
                                            };
                                            q += 1;
                                        }
                                    }
                                    _ => {
                                        dst[q..q + o2].fill(0.0);
                                        q += o2;
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn col2im(&self, channels: usize, cols: &[f64], dx: &mut [f64]) {
        let [i0, i1, i2] = self.input;
        let [o0, o1, o2] = self.out;
        let p = self.out_vol();
        let mut row = 0;
        for c in 0..channels {
            let dxc = &mut dx[c * i0 * i1 * i2..(c + 1) * i0 * i1 * i2];
            for k0 in 0..self.kernel[0] {
                for k1 in 0..self.kernel[1] {
                    for k2 in 0..self.kernel[2] {
                        let src = &cols[row * p..(row + 1) * p];
                        let mut q = 0;
                        for a in 0..o0 {
                            let s0 = self.src(0, a, k0);
                            for b in 0..o1 {
                                let s1 = self.src(1, b, k1);
                                if let (Some(s0), Some(s1)) = (s0, s1) {
                                    let base = (s0 * i1 + s1) * i2;
                                    for c2 in 0..o2 {
                                        if let Some(s2) = self.src(2, c2, k2) {
                                            dxc[base + s2] += src[q + c2];
                                        }
                                    }
                                }
                                q += o2;
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }
}

/// Output extents `floor((D + 2p - K) / s) + 1` per spatial axis.
pub fn output_extents(input: &[usize], kernel: &[usize], stride: &[usize], padding: &[usize]) -> Result<Vec<usize>> {
    let g = Geom::new(input, kernel, stride, padding, "shape")?;
    Ok(g.out[3 - input.len()..].to_vec())
}

/// Splits `shape` into `(batch, channels, spatial)` for an op of spatial rank
/// `rank`; an input of rank `rank + 1` is treated as a single unbatched sample.
fn batch_layout(shape: &[usize], rank: usize, op: &'static str) -> Result<(usize, usize, Vec<usize>, bool)> {
    if shape.len() == rank + 2 {
        Ok((shape[0], shape[1], shape[2..].to_vec(), true))
    } else if shape.len() == rank + 1 {
        Ok((1, shape[0], shape[1..].to_vec(), false))
    } else {
        Err(Error::config(format!(
            "{op}: expected input of rank {} or {}, got shape {shape:?}",
            rank + 1,
            rank + 2
        )))
    }
}

impl Tensor {
    /// N-d cross-correlation, N = `weight.ndim() - 2` in 1..=3.
    ///
    /// `self` is `[B, C_in, D..]` or unbatched `[C_in, D..]`; `weight` is
    /// `[C_out, C_in, K..]`; output extents are `floor((D + 2p - K)/s) + 1`.
    pub fn conv(&self, weight: &Tensor, bias: Option<&Tensor>, stride: &[usize], padding: &[usize]) -> Result<Tensor> {
        let ws = weight.shape();
        if ws.len() < 3 || ws.len() > 5 {
            return Err(Error::config(format!("conv weight must have rank 3..=5, got {ws:?}")));
        }
        let rank = ws.len() - 2;
        let (batch, c_in, spatial, batched) = batch_layout(self.shape(), rank, "conv")?;
        if c_in != ws[1] {
            return Err(Error::Shape {
                op: "conv",
                lhs: self.shape().to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let c_out = ws[0];
        if let Some(b) = bias {
            if b.numel() != c_out {
                return Err(Error::Shape {
                    op: "conv bias",
                    lhs: ws.to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
        }
        let g = Geom::new(&spatial, &ws[2..], stride, padding, "conv")?;
        let (in_vol, k_rows, p) = (g.in_vol(), c_in * g.k_vol(), g.out_vol());
        let x = self.data();
        let w = weight.data();
        let mut out = vec![0.0; batch * c_out * p];
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; k_rows * p] };
        for b in 0..batch {
            let xb = &x[b * c_in * in_vol..(b + 1) * c_in * in_vol];
            let src: &[f64] = if g.is_pointwise() {
                xb
            } else {
                g.im2col(c_in, xb, &mut cols);
                &cols
            };
            let ob = &mut out[b * c_out * p..(b + 1) * c_out * p];
            gemm(c_out, k_rows, p, w, false, src, false, ob, 0.0);
            if let Some(bias) = bias {
                for (row, bv) in ob.chunks_mut(p).zip(bias.data()) {
                    row.iter_mut().for_each(|v| *v += bv);
                }
            }
        }

        let mut shape = Vec::with_capacity(rank + 2);
        if batched {
            shape.push(batch);
        }
        shape.push(c_out);
        shape.extend_from_slice(&g.out[3 - rank..]);

        let (xt, wt) = (self.clone(), weight.clone());
        let mut inputs = vec![self.clone(), weight.clone()];
        inputs.extend(bias.cloned());
        let has_bias = bias.is_some();
        Ok(Tensor::from_op(out, shape, "conv", inputs, move |_, gout, need| {
            let x = xt.data();
            let w = wt.data();
            let mut gx = need[0].then(|| vec![0.0; x.len()]);
            let mut gw = need[1].then(|| vec![0.0; w.len()]);
            let mut gb = vec![0.0; c_out];
            let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; k_rows * p] };
            let mut dcols = vec![0.0; k_rows * p];
            for b in 0..batch {
                let gb_out = &gout[b * c_out * p..(b + 1) * c_out * p];
                if has_bias {
                    for (acc, row) in gb.iter_mut().zip(gb_out.chunks(p)) {
                        *acc += row.iter().sum::<f64>();
                    }
                }
                let xb = &x[b * c_in * in_vol..(b + 1) * c_in * in_vol];
                if let Some(gw) = gw.as_mut() {
                    let src: &[f64] = if g.is_pointwise() {
                        xb
                    } else {
                        g.im2col(c_in, xb, &mut cols);
                        &cols
                    };
                    gemm(c_out, p, k_rows, gb_out, false, src, true, gw, 1.0);
                }
                if let Some(gx) = gx.as_mut() {
                    let gxb = &mut gx[b * c_in * in_vol..(b + 1) * c_in * in_vol];
                    if g.is_pointwise() {
                        gemm(k_rows, c_out, p, w, true, gb_out, false, gxb, 1.0);
                    } else {
                        gemm(k_rows, c_out, p, w, true, gb_out, false, &mut dcols, 0.0);
                        g.col2im(c_in, &dcols, gxb);
                    }
                }
            }
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(Some(gb));
            }
            grads
        }))
    }

    /// Windowed max / average pooling over the trailing `window.len()` dims.
    /// Max pooling ignores padded positions; average pooling divides by the
    /// full window volume.
    pub fn pool(&self, kind: PoolKind, window: &[usize], stride: &[usize], padding: &[usize]) -> Result<Tensor> {
        let rank = window.len();
        let (batch, ch, spatial, batched) = batch_layout(self.shape(), rank, "pool")?;
        let g = Geom::new(&spatial, window, stride, padding, "pool")?;
        let (in_vol, p, kv) = (g.in_vol(), g.out_vol(), g.k_vol());
        let planes = batch * ch;
        let x = self.data();
        let mut out = vec![0.0; planes * p];
        let mut argmax = if kind == PoolKind::Max { vec![usize::MAX; planes * p] } else { Vec::new() };
        let [_, i1, i2] = g.input;
        for plane in 0..planes {
            let xp = &x[plane * in_vol..(plane + 1) * in_vol];
            let mut q = 0;
            for a in 0..g.out[0] {
                for b in 0..g.out[1] {
                    for c in 0..g.out[2] {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = usize::MAX;
                        let mut total = 0.0;
                        for k0 in 0..g.kernel[0] {
                            let Some(s0) = g.src(0, a, k0) else { continue };
                            for k1 in 0..g.kernel[1] {
                                let Some(s1) = g.src(1, b, k1) else { continue };
                                for k2 in 0..g.kernel[2] {
                                    let Some(s2) = g.src(2, c, k2) else { continue };
                                    let at = (s0 * i1 + s1) * i2 + s2;
                                    let v = xp[at];
                                    total += v;
                                    if v > best {
                                        best = v;
                                        best_at = at;
                                    }
                                }
                            }
                        }
                        let o = plane * p + q;
                        match kind {
                            PoolKind::Max => {
                                out[o] = best;
                                argmax[o] = best_at;
                            }
                            PoolKind::Avg => out[o] = total / kv as f64,
                        }
                        q += 1;
                    }
                }
            }
        }
        if kind == PoolKind::Max && kink_tracking() {
            record_kinks(argmax.iter().map(|&a| a as u64));
        }
        let mut shape = Vec::with_capacity(rank + 2);
        if batched {
            shape.push(batch);
        }
        shape.push(ch);
        shape.extend_from_slice(&g.out[3 - rank..]);
        let total_in = x.len();
        Ok(Tensor::from_op(out, shape, "pool", vec![self.clone()], move |_, gout, _| {
            let mut gx = vec![0.0; total_in];
            match kind {
                PoolKind::Max => {
                    for (o, &at) in argmax.iter().enumerate() {
                        if at != usize::MAX {
                            gx[(o / p) * in_vol + at] += gout[o];
                        }
                    }
                }
                PoolKind::Avg => {
                    let [_, i1, i2] = g.input;
                    for plane in 0..planes {
                        let mut q = 0;
                        for a in 0..g.out[0] {
                            for b in 0..g.out[1] {
                                for c in 0..g.out[2] {
                                    let share = gout[plane * p + q] / kv as f64;
                                    for k0 in 0..g.kernel[0] {
                                        let Some(s0) = g.src(0, a, k0) else { continue };
                                        for k1 in 0..g.kernel[1] {
                                            let Some(s1) = g.src(1, b, k1) else { continue };
                                            for k2 in 0..g.kernel[2] {
                                                let Some(s2) = g.src(2, c, k2) else { continue };
                                                gx[plane * in_vol + (s0 * i1 + s1) * i2 + s2] += share;
                                            }
                                        }
                                    }
                                    q += 1;
                                }
                            }
                        }
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Mean over the trailing `spatial_dims` axes.
    pub fn global_avg_pool(&self, spatial_dims: usize) -> Result<Tensor> {
        if spatial_dims == 0 || spatial_dims >= self.ndim() {
            return Err(Error::config(format!(
                "global_avg_pool over {spatial_dims} dims of shape {:?}",
                self.shape()
            )));
        }
        let keep = &self.shape()[..self.ndim() - spatial_dims];
        let sp: usize = self.shape()[self.ndim() - spatial_dims..].iter().product();
        let out = self.data().chunks(sp).map(|c| c.iter().sum::<f64>() / sp as f64).collect();
        Ok(Tensor::from_op(out, keep.to_vec(), "global_avg_pool", vec![self.clone()], move |_, g, _| {
            vec![Some(g.iter().flat_map(|&v| std::iter::repeat_n(v / sp as f64, sp)).collect())]
        }))
    }
}
