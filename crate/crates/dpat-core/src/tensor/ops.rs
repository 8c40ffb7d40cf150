//! Forward operations and their backward closures.

use std::sync::Arc;

use super::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, BackCtx, Tensor};
use crate::error::{Error, Result};

/// Guard below which a column counts as zero for cosine/normalization.
pub const NORM_EPSILON: f64 = 1e-12;

fn axis_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

impl Tensor {
    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let n = other.shape()[1];
        let data = gemm_nn(self.data(), other.data(), m, k, n);
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let a = &ctx.parents[0];
                let b = &ctx.parents[1];
                let ga = if a.requires_grad() {
                    Some(gemm_nt(ctx.grad, b.data(), m, n, k))
                } else {
                    None
                };
                let gb = if b.requires_grad() {
                    Some(gemm_tn(a.data(), ctx.grad, k, m, n))
                } else {
                    None
                };
                vec![ga, gb]
            }),
        ))
    }

    /// Rank-2 transpose (materialized).
    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape("transpose", self.shape(), &[]));
        }
        let (r, c) = (self.shape()[0], self.shape()[1]);
        let src = self.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Ok(Tensor::from_op(
            vec![c, r],
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let mut g = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        g[i * c + j] = ctx.grad[j * r + i];
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Numerically-stable softmax along `axis`; each slice sums to 1.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::InvalidArgument(format!(
                "softmax axis {} out of range for shape {:?}",
                axis,
                self.shape()
            )));
        }
        let (outer, len, inner) = axis_dims(self.shape(), axis);
        let src = self.data();
        let mut data = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(src[at(j)]);
                }
                let mut sum = 0.0;
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    data[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    data[at(j)] /= sum;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                // dx = y ⊙ (g − Σ g⊙y) per slice
                let y = ctx.out_data;
                let g = ctx.grad;
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let mut dot = 0.0;
                        for j in 0..len {
                            dot += g[at(j)] * y[at(j)];
                        }
                        for j in 0..len {
                            dx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Normalizes each column of a rank-2 tensor to unit Euclidean norm.
    /// Columns with norm below [`NORM_EPSILON`] stay exactly zero.
    pub fn l2_normalize_cols(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape("l2_normalize_cols", self.shape(), &[]));
        }
        let (rows, cols) = (self.shape()[0], self.shape()[1]);
        let src = self.data();
        let mut norms = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                norms[c] += src[r * cols + c] * src[r * cols + c];
            }
        }
        for n in norms.iter_mut() {
            *n = n.sqrt();
        }
        let mut data = vec![0.0; src.len()];
        for r in 0..rows {
            for c in 0..cols {
                if norms[c] >= NORM_EPSILON {
                    data[r * cols + c] = src[r * cols + c] / norms[c];
                }
            }
        }
        let norms = Arc::new(norms);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                // d(x/n)/dx = I/n − x xᵀ/n³ per column; zero columns get zero grad
                let x = ctx.parents[0].data();
                let g = ctx.grad;
                let mut dx = vec![0.0; x.len()];
                for c in 0..cols {
                    let n = norms[c];
                    if n < NORM_EPSILON {
                        continue;
                    }
                    let mut dot = 0.0;
                    for r in 0..rows {
                        dot += x[r * cols + c] * g[r * cols + c];
                    }
                    let n3 = n * n * n;
                    for r in 0..rows {
                        dx[r * cols + c] = g[r * cols + c] / n - x[r * cols + c] * dot / n3;
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Concatenation along `axis`; all other extents must match.
    pub fn concat(&self, other: &Tensor, axis: usize) -> Result<Tensor> {
        if self.rank() != other.rank() || axis >= self.rank() {
            return Err(Error::shape("concat", self.shape(), other.shape()));
        }
        for (d, (a, b)) in self.shape().iter().zip(other.shape()).enumerate() {
            if d != axis && a != b {
                return Err(Error::shape("concat", self.shape(), other.shape()));
            }
        }
        let (outer, len_a, inner) = axis_dims(self.shape(), axis);
        let len_b = other.shape()[axis];
        let mut shape = self.shape().to_vec();
        shape[axis] = len_a + len_b;
        let (a, b) = (self.data(), other.data());
        let mut data = Vec::with_capacity(a.len() + b.len());
        for o in 0..outer {
            data.extend_from_slice(&a[o * len_a * inner..(o + 1) * len_a * inner]);
            data.extend_from_slice(&b[o * len_b * inner..(o + 1) * len_b * inner]);
        }
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let g = ctx.grad;
                let stride = (len_a + len_b) * inner;
                let mut ga = vec![0.0; outer * len_a * inner];
                let mut gb = vec![0.0; outer * len_b * inner];
                for o in 0..outer {
                    ga[o * len_a * inner..(o + 1) * len_a * inner]
                        .copy_from_slice(&g[o * stride..o * stride + len_a * inner]);
                    gb[o * len_b * inner..(o + 1) * len_b * inner]
                        .copy_from_slice(&g[o * stride + len_a * inner..(o + 1) * stride]);
                }
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Contiguous sub-range `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(Error::InvalidArgument(format!(
                "narrow {}..{} on axis {} of shape {:?}",
                start,
                start + len,
                axis,
                self.shape()
            )));
        }
        let (outer, full, inner) = axis_dims(self.shape(), axis);
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        Ok(Tensor::from_op(
            shape,
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let mut g = vec![0.0; outer * full * inner];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    g[base..base + len * inner]
                        .copy_from_slice(&ctx.grad[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn relu(&self) -> Tensor {
        let data = self.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|ctx: &BackCtx<'_>| {
                let x = ctx.parents[0].data();
                let dx = ctx
                    .grad
                    .iter()
                    .zip(x)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![Some(dx)]
            }),
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::shape("add", self.shape(), other.shape()));
        }
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx: &BackCtx<'_>| {
                vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::shape("sub", self.shape(), other.shape()));
        }
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx: &BackCtx<'_>| {
                vec![
                    Some(ctx.grad.to_vec()),
                    Some(ctx.grad.iter().map(|g| -g).collect()),
                ]
            }),
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::shape("mul", self.shape(), other.shape()));
        }
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx: &BackCtx<'_>| {
                let a = ctx.parents[0].data();
                let b = ctx.parents[1].data();
                let ga = ctx.grad.iter().zip(b).map(|(g, v)| g * v).collect();
                let gb = ctx.grad.iter().zip(a).map(|(g, v)| g * v).collect();
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                vec![Some(ctx.grad.iter().map(|g| g * factor).collect())]
            }),
        )
    }

    pub fn add_scalar(&self, value: f64) -> Tensor {
        let data = self.data().iter().map(|v| v + value).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|ctx: &BackCtx<'_>| vec![Some(ctx.grad.to_vec())]),
        )
    }

    /// Sum of all elements (scalar output).
    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        let numel = self.numel();
        Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| vec![Some(vec![ctx.grad[0]; numel])]),
        )
    }

    /// Mean of all elements (scalar output).
    pub fn mean(&self) -> Tensor {
        let numel = self.numel();
        let s: f64 = self.data().iter().sum();
        Tensor::from_op(
            vec![1],
            vec![s / numel as f64],
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                vec![Some(vec![ctx.grad[0] / numel as f64; numel])]
            }),
        )
    }

    /// Same data, new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            Box::new(|ctx: &BackCtx<'_>| vec![Some(ctx.grad.to_vec())]),
        ))
    }

    /// Same-padded 2-D convolution of a (c_in×h×w) map with a
    /// (c_out×c_in×k×k) weight; odd `k`, unit stride, optional dilation.
    pub fn conv2d(&self, weight: &Tensor, dilation: usize) -> Result<Tensor> {
        if self.rank() != 3 || weight.rank() != 4 {
            return Err(Error::shape("conv2d", self.shape(), weight.shape()));
        }
        let (c_in, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (c_out, wc_in, k, k2) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        if wc_in != c_in || k != k2 || k % 2 == 0 {
            return Err(Error::shape("conv2d", self.shape(), weight.shape()));
        }
        let hw = h * w;
        let col = im2col(self.data(), c_in, h, w, k, dilation);
        let data = gemm_nn(weight.data(), &col, c_out, c_in * k * k, hw);
        let col = Arc::new(col);
        Ok(Tensor::from_op(
            vec![c_out, h, w],
            data,
            vec![self.clone(), weight.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let x = &ctx.parents[0];
                let wt = &ctx.parents[1];
                let gw = if wt.requires_grad() {
                    Some(gemm_nt(ctx.grad, &col, c_out, hw, c_in * k * k))
                } else {
                    None
                };
                let gx = if x.requires_grad() {
                    let gcol = gemm_tn(wt.data(), ctx.grad, c_in * k * k, c_out, hw);
                    Some(col2im(&gcol, c_in, h, w, k, dilation))
                } else {
                    None
                };
                vec![gx, gw]
            }),
        ))
    }

    /// Adds a per-channel bias to a (c×h×w) map.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        if self.rank() != 3 || bias.rank() != 1 || bias.shape()[0] != self.shape()[0] {
            return Err(Error::shape("add_channel_bias", self.shape(), bias.shape()));
        }
        let (c, hw) = (self.shape()[0], self.shape()[1] * self.shape()[2]);
        let b = bias.data();
        let mut data = self.data().to_vec();
        for ch in 0..c {
            for v in &mut data[ch * hw..(ch + 1) * hw] {
                *v += b[ch];
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), bias.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let gb = (0..c)
                    .map(|ch| ctx.grad[ch * hw..(ch + 1) * hw].iter().sum())
                    .collect();
                vec![Some(ctx.grad.to_vec()), Some(gb)]
            }),
        ))
    }

    /// 2×2 average pooling with stride 2; h and w must be even.
    pub fn avgpool2(&self) -> Result<Tensor> {
        if self.rank() != 3 || self.shape()[1] % 2 != 0 || self.shape()[2] % 2 != 0 {
            return Err(Error::shape("avgpool2", self.shape(), &[]));
        }
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        let src = self.data();
        let mut data = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let base = ch * h * w + 2 * y * w + 2 * x;
                    data[ch * oh * ow + y * ow + x] =
                        0.25 * (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]);
                }
            }
        }
        Ok(Tensor::from_op(
            vec![c, oh, ow],
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let mut g = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            let gv = 0.25 * ctx.grad[ch * oh * ow + y * ow + x];
                            let base = ch * h * w + 2 * y * w + 2 * x;
                            g[base] += gv;
                            g[base + 1] += gv;
                            g[base + w] += gv;
                            g[base + w + 1] += gv;
                        }
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Nearest-neighbor 2× upsampling of a (c×h×w) map.
    pub fn upsample2_nearest(&self) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::shape("upsample2_nearest", self.shape(), &[]));
        }
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (oh, ow) = (h * 2, w * 2);
        let src = self.data();
        let mut data = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    data[ch * oh * ow + y * ow + x] = src[ch * h * w + (y / 2) * w + x / 2];
                }
            }
        }
        Ok(Tensor::from_op(
            vec![c, oh, ow],
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let mut g = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            g[ch * h * w + (y / 2) * w + x / 2] +=
                                ctx.grad[ch * oh * ow + y * ow + x];
                        }
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Per-channel spatial mean of a (c×h×w) map, producing (c×1×1).
    pub fn global_avg_pool(&self) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::shape("global_avg_pool", self.shape(), &[]));
        }
        let (c, hw) = (self.shape()[0], self.shape()[1] * self.shape()[2]);
        let src = self.data();
        let data = (0..c)
            .map(|ch| src[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
            .collect();
        Ok(Tensor::from_op(
            vec![c, 1, 1],
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let mut g = vec![0.0; c * hw];
                for ch in 0..c {
                    let gv = ctx.grad[ch] / hw as f64;
                    for v in &mut g[ch * hw..(ch + 1) * hw] {
                        *v = gv;
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Broadcasts a (c×1×1) map to (c×h×w).
    pub fn broadcast_spatial(&self, h: usize, w: usize) -> Result<Tensor> {
        if self.rank() != 3 || self.shape()[1] != 1 || self.shape()[2] != 1 {
            return Err(Error::shape("broadcast_spatial", self.shape(), &[h, w]));
        }
        let c = self.shape()[0];
        let src = self.data();
        let mut data = vec![0.0; c * h * w];
        for ch in 0..c {
            for v in &mut data[ch * h * w..(ch + 1) * h * w] {
                *v = src[ch];
            }
        }
        Ok(Tensor::from_op(
            vec![c, h, w],
            data,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                let g = (0..c)
                    .map(|ch| ctx.grad[ch * h * w..(ch + 1) * h * w].iter().sum())
                    .collect();
                vec![Some(g)]
            }),
        ))
    }

    /// Mean two-class cross-entropy of (2×h×w) logits against a binary
    /// target of h·w bytes (0 or 1), computed with log-sum-exp.
    pub fn cross_entropy_binary(&self, target: &[u8]) -> Result<Tensor> {
        if self.rank() != 3 || self.shape()[0] != 2 {
            return Err(Error::shape("cross_entropy_binary", self.shape(), &[2]));
        }
        let hw = self.shape()[1] * self.shape()[2];
        if target.len() != hw {
            return Err(Error::shape(
                "cross_entropy_binary",
                self.shape(),
                &[target.len()],
            ));
        }
        let src = self.data();
        let mut loss = 0.0;
        for p in 0..hw {
            let (l0, l1) = (src[p], src[hw + p]);
            let m = l0.max(l1);
            let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            let lt = if target[p] == 0 { l0 } else { l1 };
            loss += lse - lt;
        }
        loss /= hw as f64;
        let target: Arc<Vec<u8>> = Arc::new(target.to_vec());
        Ok(Tensor::from_op(
            vec![1],
            vec![loss],
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_>| {
                // d/dl_c = (softmax_c − 1[c == t]) / hw
                let x = ctx.parents[0].data();
                let g = ctx.grad[0];
                let mut dx = vec![0.0; 2 * hw];
                for p in 0..hw {
                    let (l0, l1) = (x[p], x[hw + p]);
                    let m = l0.max(l1);
                    let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
                    let z = e0 + e1;
                    let (s0, s1) = (e0 / z, e1 / z);
                    let (t0, t1) = if target[p] == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
                    dx[p] = g * (s0 - t0) / hw as f64;
                    dx[hw + p] = g * (s1 - t1) / hw as f64;
                }
                vec![Some(dx)]
            }),
        ))
    }
}
