use rand::Rng;

use super::gemm::gemm;
use super::{kink_tracking, numel, record_kinks, Tensor};
use crate::error::{Error, Result};

/// `(outer, len, inner)` decomposition of a shape around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(shape: &[usize], axis: usize, op: &'static str) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::Shape {
            op,
            lhs: shape.to_vec(),
            rhs: vec![axis],
        });
    }
    Ok(())
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Tensor {
    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            "add",
            vec![self.clone(), other.clone()],
            |_, g, _| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "sub")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            "sub",
            vec![self.clone(), other.clone()],
            |_, g, _| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "mul")?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            "mul",
            vec![self.clone(), other.clone()],
            move |_, g, need| {
                let ga = need[0].then(|| g.iter().zip(b.data()).map(|(g, b)| g * b).collect());
                let gb = need[1].then(|| g.iter().zip(a.data()).map(|(g, a)| g * a).collect());
                vec![ga, gb]
            },
        ))
    }

    /// Adds `row` (length = last extent) to every row.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let n = *self.shape().last().unwrap();
        if row.numel() != n {
            return Err(Error::Shape {
                op: "add_row",
                lhs: self.shape().to_vec(),
                rhs: row.shape().to_vec(),
            });
        }
        let r = row.data();
        let data = self
            .data()
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(r).map(|(a, b)| a + b))
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            "add_row",
            vec![self.clone(), row.clone()],
            move |_, g, need| {
                let grow = need[1].then(|| {
                    let mut acc = vec![0.0; n];
                    for chunk in g.chunks(n) {
                        super::add_into(&mut acc, chunk);
                    }
                    acc
                });
                vec![need[0].then(|| g.to_vec()), grow]
            },
        ))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op(data, self.shape().to_vec(), "scale", vec![self.clone()], move |_, g, _| {
            vec![Some(g.iter().map(|v| v * c).collect())]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v + c).collect();
        Tensor::from_op(data, self.shape().to_vec(), "add_scalar", vec![self.clone()], |_, g, _| {
            vec![Some(g.to_vec())]
        })
    }

    fn unary<F, D>(&self, kind: &'static str, f: F, df: D) -> Tensor
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let data = self.data().iter().map(|&x| f(x)).collect();
        let x = self.clone();
        Tensor::from_op(data, self.shape().to_vec(), kind, vec![self.clone()], move |out, g, _| {
            let gx = x
                .data()
                .iter()
                .zip(out)
                .zip(g)
                .map(|((&xi, &yi), &gi)| gi * df(xi, yi))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn relu(&self) -> Tensor {
        if kink_tracking() {
            record_kinks(self.data().iter().map(|&x| (x > 0.0) as u64));
        }
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Tensor {
        self.unary(
            "gelu",
            |x| 0.5 * x * (1.0 + libm::erf(x / SQRT_2)),
            |x, _| 0.5 * (1.0 + libm::erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp(),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(
            "sigmoid",
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            |_, y| y * (1.0 - y),
        )
    }

    pub fn tanh(&self) -> Tensor {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn exp(&self) -> Tensor {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Tensor {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    /// `x^p` for non-negative inputs; the derivative at 0 is taken as 0
    /// unless `p == 1`.
    pub fn powf(&self, p: f64) -> Tensor {
        self.unary(
            "powf",
            move |x| x.powf(p),
            move |x, _| {
                if p == 0.0 {
                    0.0
                } else if x == 0.0 {
                    if p == 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    p * x.powf(p - 1.0)
                }
            },
        )
    }

    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        Tensor::from_op(vec![self.data().iter().sum()], vec![1], "sum", vec![self.clone()], move |_, g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }

    /// `[m×k] · [k×n] → [m×n]`.
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(), false, b.data(), false, &mut out, 0.0);
        let (ta, tb) = (self.clone(), b.clone());
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            "matmul",
            vec![self.clone(), b.clone()],
            move |_, g, need| {
                let ga = need[0].then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g, false, tb.data(), true, &mut d, 0.0);
                    d
                });
                let gb = need[1].then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g, false, &mut d, 0.0);
                    d
                });
                vec![ga, gb]
            },
        ))
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                lhs: s.to_vec(),
                rhs: vec![],
            });
        }
        let (r, c) = (s[0], s[1]);
        let out = transpose_buf(r, c, self.data());
        Ok(Tensor::from_op(out, vec![c, r], "transpose", vec![self.clone()], move |_, g, _| {
            vec![Some(transpose_buf(c, r, g))]
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            "reshape",
            vec![self.clone()],
            |_, g, _| vec![Some(g.to_vec())],
        ))
    }

    /// Softmax along `axis`, shifted by the slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis(self.shape(), axis, "softmax")?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            "softmax",
            vec![self.clone()],
            move |y, g, _| {
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..len {
                            gx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Normalizes each slice along `axis` to zero mean / unit variance, then
    /// applies the optional per-position affine `gamma`, `beta`.
    pub fn layer_norm(
        &self,
        axis: usize,
        gamma: Option<&Tensor>,
        beta: Option<&Tensor>,
        eps: f64,
    ) -> Result<Tensor> {
        check_axis(self.shape(), axis, "layer_norm")?;
        if eps <= 0.0 {
            return Err(Error::config("layer_norm eps must be positive"));
        }
        let (outer, len, inner) = axis_split(self.shape(), axis);
        for p in [gamma, beta].into_iter().flatten() {
            if p.numel() != len {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: self.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let ones = vec![1.0; len];
        let zeros = vec![0.0; len];
        let gv = gamma.map_or(&ones[..], |g| g.data()).to_vec();
        let bv = beta.map_or(&zeros[..], |b| b.data());
        let x = self.data();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; outer * inner];
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mean = (0..len).map(|j| x[idx(j)]).sum::<f64>() / len as f64;
                let var = (0..len).map(|j| (x[idx(j)] - mean).powi(2)).sum::<f64>() / len as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std[o * inner + i] = is;
                for j in 0..len {
                    let h = (x[idx(j)] - mean) * is;
                    xhat[idx(j)] = h;
                    out[idx(j)] = gv[j] * h + bv[j];
                }
            }
        }
        let mut inputs = vec![self.clone()];
        inputs.extend(gamma.cloned());
        inputs.extend(beta.cloned());
        let (has_g, has_b) = (gamma.is_some(), beta.is_some());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            "layer_norm",
            inputs,
            move |_, g, need| {
                let mut gx = vec![0.0; g.len()];
                let mut ggamma = vec![0.0; len];
                let mut gbeta = vec![0.0; len];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let mut sum_d = 0.0;
                        let mut sum_dh = 0.0;
                        for j in 0..len {
                            let d = g[idx(j)] * gv[j];
                            sum_d += d;
                            sum_dh += d * xhat[idx(j)];
                            ggamma[j] += g[idx(j)] * xhat[idx(j)];
                            gbeta[j] += g[idx(j)];
                        }
                        let is = inv_std[o * inner + i];
                        let n = len as f64;
                        for j in 0..len {
                            let d = g[idx(j)] * gv[j];
                            gx[idx(j)] = is * (d - sum_d / n - xhat[idx(j)] * sum_dh / n);
                        }
                    }
                }
                let mut grads = vec![need[0].then_some(gx)];
                if has_g {
                    grads.push(Some(ggamma));
                }
                if has_b {
                    grads.push(Some(gbeta));
                }
                grads
            },
        ))
    }

    /// Training-mode batch normalization of `[N, C, spatial...]` with batch
    /// statistics per channel. Returns the output plus the batch mean and
    /// unbiased variance for running-statistics updates.
    pub fn batch_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let s = self.shape();
        if s.len() < 2 || gamma.numel() != s[1] || beta.numel() != s[1] {
            return Err(Error::Shape {
                op: "batch_norm",
                lhs: s.to_vec(),
                rhs: gamma.shape().to_vec(),
            });
        }
        let (n, c) = (s[0], s[1]);
        let sp: usize = s[2..].iter().product();
        let m = (n * sp) as f64;
        let x = self.data();
        let (gv, bv) = (gamma.data(), beta.data());
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * sp;
                mean[ch] += x[base..base + sp].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * sp;
                var[ch] += x[base..base + sp].iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * sp;
                for p in base..base + sp {
                    let h = (x[p] - mean[ch]) * inv_std[ch];
                    xhat[p] = h;
                    out[p] = gv[ch] * h + bv[ch];
                }
            }
        }
        let gvec = gv.to_vec();
        let y = Tensor::from_op(
            out,
            s.to_vec(),
            "batch_norm",
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |_, g, need| {
                let mut sum_d = vec![0.0; c];
                let mut sum_dh = vec![0.0; c];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * sp;
                        for p in base..base + sp {
                            let d = g[p] * gvec[ch];
                            sum_d[ch] += d;
                            sum_dh[ch] += d * xhat[p];
                            gg[ch] += g[p] * xhat[p];
                            gb[ch] += g[p];
                        }
                    }
                }
                let gx = need[0].then(|| {
                    let mut gx = vec![0.0; g.len()];
                    for b in 0..n {
                        for ch in 0..c {
                            let base = (b * c + ch) * sp;
                            for p in base..base + sp {
                                let d = g[p] * gvec[ch];
                                gx[p] = inv_std[ch] * (d - sum_d[ch] / m - xhat[p] * sum_dh[ch] / m);
                            }
                        }
                    }
                    gx
                });
                vec![gx, Some(gg), Some(gb)]
            },
        );
        let unbiased = if m > 1.0 {
            var.iter().map(|v| v * m / (m - 1.0)).collect()
        } else {
            var
        };
        Ok((y, mean, unbiased))
    }

    /// Inference-mode batch normalization with fixed statistics.
    pub fn batch_norm_eval(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Tensor> {
        let s = self.shape();
        if s.len() < 2 || gamma.numel() != s[1] || beta.numel() != s[1] || mean.len() != s[1] || var.len() != s[1] {
            return Err(Error::Shape {
                op: "batch_norm_eval",
                lhs: s.to_vec(),
                rhs: gamma.shape().to_vec(),
            });
        }
        let (n, c) = (s[0], s[1]);
        let sp: usize = s[2..].iter().product();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let x = self.data();
        let (gv, bv) = (gamma.data(), beta.data());
        let mut out = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * sp;
                let (a, sh) = (gv[ch] * inv_std[ch], bv[ch]);
                for p in base..base + sp {
                    out[p] = a * (x[p] - mean[ch]) + sh;
                }
            }
        }
        let (xt, gvec) = (self.clone(), gv.to_vec());
        Ok(Tensor::from_op(
            out,
            s.to_vec(),
            "batch_norm_eval",
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |_, g, need| {
                let x = xt.data();
                let mut gx = vec![0.0; g.len()];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * sp;
                        for p in base..base + sp {
                            gx[p] = g[p] * gvec[ch] * inv_std[ch];
                            gg[ch] += g[p] * (x[p] - mean[ch]) * inv_std[ch];
                            gb[ch] += g[p];
                        }
                    }
                }
                vec![need[0].then_some(gx), Some(gg), Some(gb)]
            },
        ))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        check_axis(first.shape(), axis, "concat")?;
        for p in parts {
            let ok = p.ndim() == first.ndim()
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let (outer, _, inner) = axis_split(first.shape(), axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                out.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        Ok(Tensor::from_op(out, shape, "concat", parts.to_vec(), move |_, g, need| {
            let mut grads: Vec<Vec<f64>> = lens.iter().map(|l| Vec::with_capacity(outer * l * inner)).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (gi, &l) in grads.iter_mut().zip(&lens) {
                    gi.extend_from_slice(&g[pos..pos + l * inner]);
                    pos += l * inner;
                }
            }
            grads.into_iter().zip(need).map(|(gi, &n)| n.then_some(gi)).collect()
        }))
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        check_axis(self.shape(), axis, "slice")?;
        let (outer, len, inner) = axis_split(self.shape(), axis);
        if start >= end || end > len {
            return Err(Error::Shape {
                op: "slice",
                lhs: self.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let w = end - start;
        let mut shape = self.shape().to_vec();
        shape[axis] = w;
        let x = self.data();
        let mut out = Vec::with_capacity(outer * w * inner);
        for o in 0..outer {
            out.extend_from_slice(&x[(o * len + start) * inner..(o * len + end) * inner]);
        }
        Ok(Tensor::from_op(out, shape, "slice", vec![self.clone()], move |_, g, _| {
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                gx[(o * len + start) * inner..(o * len + end) * inner]
                    .copy_from_slice(&g[o * w * inner..(o + 1) * w * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Gathers entries along axis 0; indices may repeat.
    pub fn index_select(&self, indices: &[usize]) -> Result<Tensor> {
        let len = self.shape()[0];
        if indices.is_empty() || indices.iter().any(|&i| i >= len) {
            return Err(Error::Shape {
                op: "index_select",
                lhs: self.shape().to_vec(),
                rhs: indices.to_vec(),
            });
        }
        let inner = self.numel() / len;
        let x = self.data();
        let mut out = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            out.extend_from_slice(&x[i * inner..(i + 1) * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[0] = indices.len();
        let idx = indices.to_vec();
        let total = self.numel();
        Ok(Tensor::from_op(out, shape, "index_select", vec![self.clone()], move |_, g, _| {
            let mut gx = vec![0.0; total];
            for (r, &i) in idx.iter().enumerate() {
                super::add_into(&mut gx[i * inner..(i + 1) * inner], &g[r * inner..(r + 1) * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Inverted dropout; identity when `rate == 0`.
    pub fn dropout(&self, rate: f64, rng: &mut impl Rng) -> Tensor {
        if rate <= 0.0 {
            return self.clone();
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = self.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        Tensor::from_op(data, self.shape().to_vec(), "dropout", vec![self.clone()], move |_, g, _| {
            vec![Some(g.iter().zip(&mask).map(|(g, m)| g * m).collect())]
        })
    }
}

fn transpose_buf(r: usize, c: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x[i * c + j];
        }
    }
    out
}
