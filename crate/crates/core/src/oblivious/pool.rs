//! Oblivious 2-D max pooling with mask-routed backward.

use super::primitives::{oargmax_traced, omax_fold};
use super::trace::{NoTrace, OpKind, TraceableKernel, Tracer};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Geometry of a pooling call over an `[N, C, H, W]` (or `[C, H, W]`) input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeometry {
    pub fn new(shape: &[usize], window: usize, stride: usize) -> Result<Self> {
        if !(3..=4).contains(&shape.len()) {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: "pooling expects [C,H,W] or [N,C,H,W]".into(),
            });
        }
        let r = shape.len();
        let (h, w) = (shape[r - 2], shape[r - 1]);
        if window == 0 || stride == 0 || window > h || window > w {
            return Err(Error::invalid(format!(
                "window {window} / stride {stride} invalid for {h}x{w}"
            )));
        }
        if !(h - window).is_multiple_of(stride) || !(w - window).is_multiple_of(stride) {
            return Err(Error::Shape {
                op: "maxpool2d",
                left: shape.to_vec(),
                right: vec![window, stride],
            });
        }
        Ok(PoolGeometry {
            planes: shape[..r - 2].iter().product(),
            height: h,
            width: w,
            window,
            stride,
            out_h: (h - window) / stride + 1,
            out_w: (w - window) / stride + 1,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        let r = input.len();
        let mut s = input[..r - 2].to_vec();
        s.extend([self.out_h, self.out_w]);
        s
    }

    /// Flat input offsets covered by output cell `(plane, oh, ow)`, row-major
    /// within the window. Depends on geometry only.
    pub fn window_offsets(&self, plane: usize, oh: usize, ow: usize) -> impl Iterator<Item = usize> + '_ {
        let base = plane * self.height * self.width;
        let (r0, c0) = (oh * self.stride, ow * self.stride);
        (0..self.window * self.window)
            .map(move |k| base + (r0 + k / self.window) * self.width + c0 + k % self.window)
    }
}

/// Max pooling that returns the pooled values plus a per-window one-hot
/// selection mask of shape `[..., out_h, out_w, window*window]`.
pub fn omaxpool2d<T: Real>(input: &Tensor<T>, window: usize, stride: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    omaxpool2d_traced(input, window, stride, &mut NoTrace)
}

pub fn omaxpool2d_traced<T: Real, R: Tracer>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
    tr: &mut R,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = PoolGeometry::new(input.shape(), window, stride)?;
    let ww = window * window;
    let cells = g.planes * g.out_h * g.out_w;
    let mut out = Vec::with_capacity(cells);
    let mut mask = Vec::with_capacity(cells * ww);
    let mut vals = vec![T::zero(); ww];
    let x = input.data();
    let wshape = [ww];
    for p in 0..g.planes {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                for (v, off) in vals.iter_mut().zip(g.window_offsets(p, oh, ow)) {
                    tr.record(OpKind::Load, input.shape(), off);
                    *v = x[off];
                }
                out.push(omax_fold(&vals, &wshape, tr));
                mask.extend(oargmax_traced(&vals, tr));
            }
        }
    }
    let out_shape = g.output_shape(input.shape());
    let mut mask_shape = out_shape.clone();
    mask_shape.push(ww);
    Ok((Tensor::from_parts(out_shape, out), Tensor::from_parts(mask_shape, mask)))
}

/// Routes `grad_out` back through the windows by multiplying with the
/// selection mask. Every input position of every window is written, so the
/// access pattern is fixed by geometry.
pub fn omaxpool2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    mask: &Tensor<T>,
    input_shape: &[usize],
    window: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = PoolGeometry::new(input_shape, window, stride)?;
    let ww = window * window;
    let out_shape = g.output_shape(input_shape);
    if grad_out.shape() != out_shape.as_slice() || mask.len() != grad_out.len() * ww {
        return Err(Error::Shape {
            op: "omaxpool2d_backward",
            left: grad_out.shape().to_vec(),
            right: out_shape,
        });
    }
    let mut gin = vec![T::zero(); input_shape.iter().product()];
    let (go, m) = (grad_out.data(), mask.data());
    let mut cell = 0;
    for p in 0..g.planes {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let d = go[cell];
                for (k, off) in g.window_offsets(p, oh, ow).enumerate() {
                    gin[off] += d * m[cell * ww + k];
                }
                cell += 1;
            }
        }
    }
    Ok(Tensor::from_parts(input_shape.to_vec(), gin))
}

#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
}

impl TraceableKernel for MaxPool2d {
    type Input = Tensor<f64>;
    type Output = Result<(Tensor<f64>, Tensor<f64>)>;
    const NAME: &'static str = "omaxpool2d";

    fn run<R: Tracer>(&self, input: &Tensor<f64>, tr: &mut R) -> Self::Output {
        omaxpool2d_traced(input, self.window, self.stride, tr)
    }
}
