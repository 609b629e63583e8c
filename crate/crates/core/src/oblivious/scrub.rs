//! Subnormal scrubbing.
//!
//! Arithmetic on subnormal floats is slower on common CPUs, which leaks
//! whether a value is very close to zero. Scrubbing adds a small positive
//! perturbation to every element and then flushes any remaining subnormal
//! (or exact zero) to the smallest normal of the same sign.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::primitives::oselect_traced;
use super::trace::{NoTrace, OpKind, TraceableKernel, Tracer};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Perturbation settings.
///
/// The default magnitude is `1e-10`: a value small enough not to disturb
/// training yet many orders of magnitude above the smallest normal number
/// of either precision.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScrubConfig {
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for ScrubConfig {
    fn default() -> Self {
        ScrubConfig {
            magnitude: 1e-10,
            seed: 0,
        }
    }
}

impl ScrubConfig {
    pub fn validate<T: Real>(&self) -> Result<()> {
        let m = T::from_f64(self.magnitude);
        if !(m > T::smallest_normal()) || !(m + m).is_finite() {
            return Err(Error::invalid(format!(
                "scrub magnitude {} must exceed the smallest normal {:e}",
                self.magnitude,
                T::smallest_normal().as_f64()
            )));
        }
        Ok(())
    }
}

/// Returns `t` with every element replaced by `t[i] + u_i`, `u_i` uniform in
/// `[magnitude, 2·magnitude)`, then any subnormal or zero result flushed to
/// `±smallest_normal`. The output contains no subnormal and no zero, and
/// `|out[i] - t[i]| <= 2·magnitude + smallest_normal`.
pub fn scrub_subnormals<T: Real, G: Rng + ?Sized>(t: &Tensor<T>, cfg: &ScrubConfig, rng: &mut G) -> Result<Tensor<T>> {
    scrub_subnormals_traced(t, cfg, rng, &mut NoTrace)
}

pub fn scrub_subnormals_traced<T: Real, G: Rng + ?Sized, R: Tracer>(
    t: &Tensor<T>,
    cfg: &ScrubConfig,
    rng: &mut G,
    tr: &mut R,
) -> Result<Tensor<T>> {
    cfg.validate::<T>()?;
    t.ensure_finite("scrub_subnormals")?;
    let mut out = t.clone();
    scrub_in_place(out.data_mut(), t.shape(), cfg, rng, tr);
    Ok(out)
}

pub(crate) fn scrub_in_place<T: Real, G: Rng + ?Sized, R: Tracer>(
    data: &mut [T],
    shape: &[usize],
    cfg: &ScrubConfig,
    rng: &mut G,
    tr: &mut R,
) {
    let mag = T::from_f64(cfg.magnitude);
    let tiny = T::smallest_normal();
    for (i, x) in data.iter_mut().enumerate() {
        tr.record(OpKind::Load, shape, i);
        let u: f64 = rng.random();
        tr.record(OpKind::Perturb, shape, i);
        let y = *x + mag * (T::one() + T::from_f64(u));
        tr.record(OpKind::Compare, shape, i);
        let small = (y.abs() < tiny) as u8;
        let flushed = tiny.copysign(y);
        *x = oselect_traced(small, flushed, y, tr);
        tr.record(OpKind::Store, shape, i);
    }
}

/// Traceable scrub over an `f64` tensor with a generator seeded from the
/// configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Scrub {
    pub config: ScrubConfig,
}

impl TraceableKernel for Scrub {
    type Input = Tensor<f64>;
    type Output = Result<Tensor<f64>>;
    const NAME: &'static str = "scrub_subnormals";

    fn run<R: Tracer>(&self, input: &Tensor<f64>, tr: &mut R) -> Self::Output {
        let mut rng: ChaCha20Rng = seeded(self.config.seed, 0);
        scrub_subnormals_traced(input, &self.config, &mut rng, tr)
    }
}
