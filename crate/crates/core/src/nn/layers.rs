//! Reference (non-oblivious) layer kernels.
//!
//! Dense and convolution kernels are data-oblivious by construction: loop
//! bounds and addresses depend only on shapes. `maxpool_forward` branches on
//! values and is kept as the baseline that the oblivious pooling kernel is
//! checked against.

use crate::error::{Error, Result};
use crate::oblivious::PoolGeometry;
use crate::parallel;
use crate::real::Real;
use crate::tensor::{matmul_a_bt, matmul_at_b, matmul_into, Tensor};

fn need_rank(t: &Tensor<impl Real>, rank: usize, op: &'static str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::InvalidShape {
            shape: t.shape().to_vec(),
            reason: format!("{op} expects rank {rank}"),
        });
    }
    Ok(())
}

/// `y = x·W + b` for `x: [m, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    need_rank(x, 2, "dense")?;
    let (m, k) = (x.shape()[0], x.shape()[1]);
    if w.rank() != 2 || w.shape()[0] != k || b.shape() != [w.shape()[1]] {
        return Err(Error::Shape {
            op: "dense",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    let n = w.shape()[1];
    let mut out = vec![T::zero(); m * n];
    matmul_into(x.data(), w.data(), &mut out, m, k, n);
    for row in out.chunks_mut(n) {
        for (o, &bj) in row.iter_mut().zip(b.data()) {
            *o += bj;
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// `dL/dx = δ·Wᵀ`.
pub(crate) fn dense_backward_input<T: Real>(delta: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (delta.shape()[0], delta.shape()[1]);
    let k = w.shape()[0];
    let mut out = vec![T::zero(); m * k];
    matmul_a_bt(delta.data(), w.data(), &mut out, m, n, k);
    Tensor::from_parts(vec![m, k], out)
}

/// Per-example `(x_i ⊗ δ_i, δ_i)` with the batch dimension kept.
pub(crate) fn dense_param_grads_per_example<T: Real>(x: &Tensor<T>, delta: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (m, k) = (x.shape()[0], x.shape()[1]);
    let n = delta.shape()[1];
    let mut gw = vec![T::zero(); m * k * n];
    parallel::for_each_row(&mut gw, k * n, |i, gi| {
        let (xi, di) = (x.row(i), delta.row(i));
        for (r, &xr) in xi.iter().enumerate() {
            for (c, &dc) in di.iter().enumerate() {
                gi[r * n + c] = xr * dc;
            }
        }
    });
    (
        Tensor::from_parts(vec![m, k, n], gw),
        Tensor::from_parts(vec![m, n], delta.data().to_vec()),
    )
}

/// Batch-summed `(Xᵀ·δ, Σ_i δ_i)`.
pub(crate) fn dense_param_grads_sum<T: Real>(x: &Tensor<T>, delta: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (m, k) = (x.shape()[0], x.shape()[1]);
    let n = delta.shape()[1];
    let mut gw = vec![T::zero(); k * n];
    matmul_at_b(x.data(), delta.data(), &mut gw, m, k, n);
    let mut gb = vec![T::zero(); n];
    for row in delta.data().chunks(n) {
        for (g, &d) in gb.iter_mut().zip(row) {
            *g += d;
        }
    }
    (Tensor::from_parts(vec![k, n], gw), Tensor::from_parts(vec![n], gb))
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// `δ ⊙ [x > 0]`, computed as a multiply by a 0/1 factor.
pub fn relu_backward<T: Real>(delta: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if delta.shape() != x.shape() {
        return Err(Error::Shape {
            op: "relu_backward",
            left: delta.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    let data = delta
        .data()
        .iter()
        .zip(x.data())
        .map(|(&d, &v)| d * T::ct_select((v > T::zero()) as u8, T::one(), T::zero()))
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

/// Shape bookkeeping for a 2-D convolution over `[m, C, H, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let mismatch = || Error::Shape {
            op: "conv2d",
            left: input.to_vec(),
            right: weight.to_vec(),
        };
        if input.len() != 4 || weight.len() != 4 || weight[1] != input[1] || weight[2] != weight[3] {
            return Err(mismatch());
        }
        let k = weight[2];
        let (hp, wp) = (input[2] + 2 * padding, input[3] + 2 * padding);
        if stride == 0 || k > hp || k > wp || !(hp - k).is_multiple_of(stride) || !(wp - k).is_multiple_of(stride) {
            return Err(mismatch());
        }
        Ok(ConvGeometry {
            batch: input[0],
            in_ch: input[1],
            height: input[2],
            width: input[3],
            out_ch: weight[0],
            kernel: k,
            stride,
            padding,
            out_h: (hp - k) / stride + 1,
            out_w: (wp - k) / stride + 1,
        })
    }

    fn in_len(&self) -> usize {
        self.in_ch * self.height * self.width
    }

    fn out_len(&self) -> usize {
        self.out_ch * self.out_h * self.out_w
    }

    fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    /// Input coordinate for output `(oh, ow)` and kernel tap `(kh, kw)`, or
    /// `None` when it falls in the zero padding.
    #[inline]
    fn tap(&self, oh: usize, ow: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        let ih = (oh * self.stride + kh).checked_sub(self.padding)?;
        let iw = (ow * self.stride + kw).checked_sub(self.padding)?;
        (ih < self.height && iw < self.width).then_some((ih, iw))
    }
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(x.shape(), w.shape(), stride, padding)?;
    if b.shape() != [g.out_ch] {
        return Err(Error::Shape {
            op: "conv2d bias",
            left: b.shape().to_vec(),
            right: vec![g.out_ch],
        });
    }
    let (wd, bd) = (w.data(), b.data());
    let mut out = vec![T::zero(); g.batch * g.out_len()];
    parallel::for_each_row(&mut out, g.out_len(), |i, yo| {
        let xi = x.row(i);
        for o in 0..g.out_ch {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let mut acc = bd[o];
                    for c in 0..g.in_ch {
                        for kh in 0..g.kernel {
                            for kw in 0..g.kernel {
                                if let Some((ih, iw)) = g.tap(oh, ow, kh, kw) {
                                    acc += wd[((o * g.in_ch + c) * g.kernel + kh) * g.kernel + kw]
                                        * xi[(c * g.height + ih) * g.width + iw];
                                }
                            }
                        }
                    }
                    yo[(o * g.out_h + oh) * g.out_w + ow] = acc;
                }
            }
        }
    });
    Ok(Tensor::from_parts(vec![g.batch, g.out_ch, g.out_h, g.out_w], out))
}

/// Gradient with respect to the convolution input.
pub(crate) fn conv2d_backward_input<T: Real>(delta: &Tensor<T>, w: &Tensor<T>, g: &ConvGeometry) -> Tensor<T> {
    let wd = w.data();
    let mut out = vec![T::zero(); g.batch * g.in_len()];
    parallel::for_each_row(&mut out, g.in_len(), |i, gx| {
        let di = delta.row(i);
        for o in 0..g.out_ch {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let d = di[(o * g.out_h + oh) * g.out_w + ow];
                    for c in 0..g.in_ch {
                        for kh in 0..g.kernel {
                            for kw in 0..g.kernel {
                                if let Some((ih, iw)) = g.tap(oh, ow, kh, kw) {
                                    gx[(c * g.height + ih) * g.width + iw] +=
                                        d * wd[((o * g.in_ch + c) * g.kernel + kh) * g.kernel + kw];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::from_parts(vec![g.batch, g.in_ch, g.height, g.width], out)
}

fn conv_weight_grad_one<T: Real>(xi: &[T], di: &[T], g: &ConvGeometry, gw: &mut [T], gb: &mut [T]) {
    for o in 0..g.out_ch {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let d = di[(o * g.out_h + oh) * g.out_w + ow];
                gb[o] += d;
                for c in 0..g.in_ch {
                    for kh in 0..g.kernel {
                        for kw in 0..g.kernel {
                            if let Some((ih, iw)) = g.tap(oh, ow, kh, kw) {
                                gw[((o * g.in_ch + c) * g.kernel + kh) * g.kernel + kw] +=
                                    d * xi[(c * g.height + ih) * g.width + iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Per-example weight and bias gradients, shapes `[m, O, C, K, K]` and `[m, O]`.
pub(crate) fn conv2d_param_grads_per_example<T: Real>(
    x: &Tensor<T>,
    delta: &Tensor<T>,
    g: &ConvGeometry,
) -> (Tensor<T>, Tensor<T>) {
    let wl = g.weight_len();
    let row = wl + g.out_ch;
    let mut both = vec![T::zero(); g.batch * row];
    parallel::for_each_row(&mut both, row, |i, r| {
        let (gw, gb) = r.split_at_mut(wl);
        conv_weight_grad_one(x.row(i), delta.row(i), g, gw, gb);
    });
    let mut gw = Vec::with_capacity(g.batch * wl);
    let mut gb = Vec::with_capacity(g.batch * g.out_ch);
    for r in both.chunks(row) {
        gw.extend_from_slice(&r[..wl]);
        gb.extend_from_slice(&r[wl..]);
    }
    (
        Tensor::from_parts(vec![g.batch, g.out_ch, g.in_ch, g.kernel, g.kernel], gw),
        Tensor::from_parts(vec![g.batch, g.out_ch], gb),
    )
}

/// Batch-summed weight and bias gradients, each weight coordinate reduced
/// over the whole batch in one accumulator.
pub(crate) fn conv2d_param_grads_sum<T: Real>(
    x: &Tensor<T>,
    delta: &Tensor<T>,
    g: &ConvGeometry,
) -> (Tensor<T>, Tensor<T>) {
    let kk = g.kernel * g.kernel;
    let mut gw = vec![T::zero(); g.weight_len()];
    parallel::for_each_indexed(&mut gw, |idx, acc| {
        let (o, c, kh, kw) = (idx / (g.in_ch * kk), (idx / kk) % g.in_ch, (idx % kk) / g.kernel, idx % g.kernel);
        for i in 0..g.batch {
            let (xi, di) = (x.row(i), delta.row(i));
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    if let Some((ih, iw)) = g.tap(oh, ow, kh, kw) {
                        *acc += di[(o * g.out_h + oh) * g.out_w + ow] * xi[(c * g.height + ih) * g.width + iw];
                    }
                }
            }
        }
    });
    let plane = g.out_h * g.out_w;
    let mut gb = vec![T::zero(); g.out_ch];
    for i in 0..g.batch {
        for (o, b) in gb.iter_mut().enumerate() {
            *b += delta.row(i)[o * plane..(o + 1) * plane].iter().copied().sum::<T>();
        }
    }
    (
        Tensor::from_parts(vec![g.out_ch, g.in_ch, g.kernel, g.kernel], gw),
        Tensor::from_parts(vec![g.out_ch], gb),
    )
}

/// Batch-aggregate convolution gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    delta: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(x.shape(), w.shape(), stride, padding)?;
    if delta.shape() != [g.batch, g.out_ch, g.out_h, g.out_w] {
        return Err(Error::Shape {
            op: "conv2d_backward",
            left: delta.shape().to_vec(),
            right: vec![g.batch, g.out_ch, g.out_h, g.out_w],
        });
    }
    let (weight, bias) = conv2d_param_grads_sum(x, delta, &g);
    Ok(ConvGrads {
        input: conv2d_backward_input(delta, w, &g),
        weight,
        bias,
    })
}

/// Branching max pooling with `stride == window`; returns the pooled values
/// and the flat input index chosen for each output (first maximum wins).
pub fn maxpool_forward<T: Real>(x: &Tensor<T>, window: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let g = PoolGeometry::new(x.shape(), window, window)?;
    let xd = x.data();
    let mut out = Vec::new();
    let mut idx = Vec::new();
    for p in 0..g.planes {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let mut best: Option<(usize, T)> = None;
                for off in g.window_offsets(p, oh, ow) {
                    match best {
                        Some((_, v)) if xd[off] <= v => {}
                        _ => best = Some((off, xd[off])),
                    }
                }
                let (i, v) = best.expect("window is non-empty");
                out.push(v);
                idx.push(i);
            }
        }
    }
    Ok((Tensor::from_parts(g.output_shape(x.shape()), out), idx))
}

pub fn maxpool_backward<T: Real>(delta: &Tensor<T>, indices: &[usize], input_shape: &[usize]) -> Result<Tensor<T>> {
    if delta.len() != indices.len() {
        return Err(Error::Shape {
            op: "maxpool_backward",
            left: delta.shape().to_vec(),
            right: vec![indices.len()],
        });
    }
    let mut out = vec![T::zero(); input_shape.iter().product()];
    for (&d, &i) in delta.data().iter().zip(indices) {
        out[i] += d;
    }
    Ok(Tensor::from_parts(input_shape.to_vec(), out))
}
