//! Branch-free select, max, argmax and one-hot.

use super::trace::{NoTrace, OpKind, TraceableKernel, Tracer};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

const SCALAR: &[usize] = &[];

/// 1 if `a > b`, else 0. Comparison result is materialised as an integer,
/// never used to pick a code path.
#[inline]
pub(crate) fn ct_gt<T: Real>(a: T, b: T) -> u8 {
    (a > b) as u8
}

#[inline]
pub(crate) fn ct_eq<T: Real>(a: T, b: T) -> u8 {
    (a == b) as u8
}

#[inline]
pub(crate) fn ct_eq_u32(a: u32, b: u32) -> u8 {
    ((((a ^ b) as u64).wrapping_sub(1)) >> 63) as u8
}

pub fn oselect<T: Real>(pred: u8, a: T, b: T) -> T {
    oselect_traced(pred, a, b, &mut NoTrace)
}

pub fn oselect_traced<T: Real, R: Tracer>(pred: u8, a: T, b: T, tr: &mut R) -> T {
    tr.record(OpKind::Select, SCALAR, 0);
    T::ct_select(pred, a, b)
}

pub fn omax<T: Real>(a: T, b: T) -> T {
    omax_traced(a, b, &mut NoTrace)
}

/// Larger of `a` and `b`; on ties returns `a`.
pub fn omax_traced<T: Real, R: Tracer>(a: T, b: T, tr: &mut R) -> T {
    tr.record(OpKind::Compare, SCALAR, 0);
    let gt = ct_gt(b, a);
    oselect_traced(gt, b, a, tr)
}

/// One-hot mask of the maximum of `v`, ties resolved to the lowest index.
pub fn oargmax<T: Real>(v: &[T]) -> Vec<T> {
    oargmax_traced(v, &mut NoTrace)
}

pub fn oargmax_traced<T: Real, R: Tracer>(v: &[T], tr: &mut R) -> Vec<T> {
    let shape = [v.len()];
    let mut mask = vec![T::zero(); v.len()];
    if v.is_empty() {
        return mask;
    }
    let best = omax_fold(v, &shape, tr);
    let mut found = 0u8;
    for (j, (&x, m)) in v.iter().zip(mask.iter_mut()).enumerate() {
        tr.record(OpKind::Load, &shape, j);
        tr.record(OpKind::Equal, &shape, j);
        let hit = ct_eq(x, best) & (found ^ 1);
        found |= hit;
        *m = oselect_traced(hit, T::one(), T::zero(), tr);
        tr.record(OpKind::Store, &shape, j);
    }
    mask
}

pub(crate) fn omax_fold<T: Real, R: Tracer>(v: &[T], shape: &[usize], tr: &mut R) -> T {
    tr.record(OpKind::Load, shape, 0);
    let mut best = v[0];
    for (j, &x) in v.iter().enumerate().skip(1) {
        tr.record(OpKind::Load, shape, j);
        best = omax_traced(best, x, tr);
    }
    best
}

/// One-hot encoding of `class` over `classes` entries built from `classes`
/// equality tests. The range check happens before any oblivious work.
pub fn oonehot<T: Real>(class: u32, classes: usize) -> Result<Tensor<T>> {
    oonehot_traced(class, classes, &mut NoTrace)
}

pub fn oonehot_traced<T: Real, R: Tracer>(class: u32, classes: usize, tr: &mut R) -> Result<Tensor<T>> {
    if classes == 0 || classes > u32::MAX as usize || class as usize >= classes {
        return Err(Error::invalid(format!("class {class} outside 0..{classes}")));
    }
    let mut out = vec![T::zero(); classes];
    oonehot_into(class, &mut out, tr);
    Ok(Tensor::from_parts(vec![classes], out))
}

/// Writes the one-hot row for an already range-checked `class`.
pub(crate) fn oonehot_into<T: Real, R: Tracer>(class: u32, out: &mut [T], tr: &mut R) {
    let shape = [out.len()];
    for (j, o) in out.iter_mut().enumerate() {
        tr.record(OpKind::Equal, &shape, j);
        let hit = ct_eq_u32(j as u32, class);
        *o = oselect_traced(hit, T::one(), T::zero(), tr);
        tr.record(OpKind::Store, &shape, j);
    }
}

/// Traceable wrapper around [`oselect`]; input is `(pred, a, b)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Select;

impl TraceableKernel for Select {
    type Input = (u8, f64, f64);
    type Output = f64;
    const NAME: &'static str = "oselect";

    fn run<R: Tracer>(&self, &(p, a, b): &Self::Input, tr: &mut R) -> f64 {
        oselect_traced(p, a, b, tr)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Max;

impl TraceableKernel for Max {
    type Input = (f64, f64);
    type Output = f64;
    const NAME: &'static str = "omax";

    fn run<R: Tracer>(&self, &(a, b): &Self::Input, tr: &mut R) -> f64 {
        omax_traced(a, b, tr)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ArgMax;

impl TraceableKernel for ArgMax {
    type Input = [f64];
    type Output = Vec<f64>;
    const NAME: &'static str = "oargmax";

    fn run<R: Tracer>(&self, v: &[f64], tr: &mut R) -> Vec<f64> {
        oargmax_traced(v, tr)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OneHot {
    pub classes: usize,
}

impl TraceableKernel for OneHot {
    type Input = u32;
    type Output = Result<Tensor<f64>>;
    const NAME: &'static str = "oonehot";

    fn run<R: Tracer>(&self, &class: &u32, tr: &mut R) -> Result<Tensor<f64>> {
        oonehot_traced(class, self.classes, tr)
    }
}
