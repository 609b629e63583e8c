//! Gradient clipping, Gaussian noise and the fused private update.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamSet, PerExampleGrads};
use crate::parallel::{for_each_row, map_indices};
use crate::real::Real;

/// Privacy and optimisation settings for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon_target: f64,
    pub delta: f64,
    /// ℓ2 bound on each example's full gradient. May be infinite.
    pub clip_bound: f64,
    pub lot_size: usize,
    pub dataset_size: usize,
    /// Noise standard deviation in units of `clip_bound`.
    pub noise_multiplier: f64,
    pub total_steps: u64,
    pub learning_rate: f64,
}

impl PrivacyParams {
    /// Sampling ratio `L / N`.
    pub fn q(&self) -> f64 {
        self.lot_size as f64 / self.dataset_size as f64
    }

    /// Checks the invariants and logs a warning when `δ ≥ 1/N`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.epsilon_target > 0.0) {
            return bad(format!("epsilon {} must be positive", self.epsilon_target));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} must lie in (0, 1)", self.delta));
        }
        if !(self.clip_bound > 0.0) {
            return bad(format!("clip bound {} must be positive", self.clip_bound));
        }
        if self.lot_size == 0 || self.lot_size > self.dataset_size {
            return bad(format!(
                "lot size {} must be in 1..={}",
                self.lot_size, self.dataset_size
            ));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return bad(format!("noise multiplier {} must be finite and non-negative", self.noise_multiplier));
        }
        if self.total_steps == 0 {
            return bad("total steps must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if let Some(w) = self.delta_warning() {
            warn!("{w}");
        }
        Ok(())
    }

    /// Message when δ is not well below `1/N`.
    pub fn delta_warning(&self) -> Option<String> {
        (self.delta * self.dataset_size as f64 >= 1.0).then(|| {
            format!(
                "delta {} is not below 1/N = {:e}; the guarantee is weak",
                self.delta,
                1.0 / self.dataset_size as f64
            )
        })
    }

    pub fn step(&self) -> DpStep {
        DpStep {
            clip_bound: self.clip_bound,
            noise_multiplier: self.noise_multiplier,
            learning_rate: self.learning_rate,
        }
    }
}

/// The per-step subset of [`PrivacyParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpStep {
    pub clip_bound: f64,
    pub noise_multiplier: f64,
    pub learning_rate: f64,
}

impl DpStep {
    /// Standard deviation of the noise added to the clipped sum.
    pub fn noise_std(&self) -> f64 {
        if self.noise_multiplier == 0.0 {
            0.0
        } else {
            self.noise_multiplier * self.clip_bound
        }
    }
}

/// What a call to [`dp_sgd_step`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied { lot_size: usize },
    /// The lot was empty; parameters and generator are untouched.
    SkippedEmptyLot,
}

fn clip_scale(norm: f64, bound: f64) -> f64 {
    if norm > bound {
        bound / norm
    } else {
        1.0
    }
}

/// `g · min(1, B / ‖g‖₂)`.
pub fn clip_grad<T: Real>(g: &[T], bound: f64) -> Result<Vec<T>> {
    if !(bound > 0.0) {
        return Err(Error::invalid(format!("clip bound {bound} must be positive")));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("clip_grad"));
    }
    let norm = g.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt();
    let s = T::from_f64(clip_scale(norm, bound));
    Ok(g.iter().map(|&x| x * s).collect())
}

/// Gaussian-mechanism noise level `B·sqrt(2 ln(1.25/δ)) / ε`.
pub fn gaussian_sigma_for(epsilon: f64, delta: f64, bound: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || !(bound > 0.0) {
        return Err(Error::invalid(format!(
            "need epsilon > 0, 0 < delta < 1, B > 0; got ({epsilon}, {delta}, {bound})"
        )));
    }
    Ok(bound * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// How [`lot_sample`] forms a lot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Uniform subset of exactly `L` indices.
    #[default]
    Fixed,
    /// Each index independently with probability `L/N`.
    Poisson,
}

/// Indices of one lot, in increasing order.
pub fn lot_sample<G: Rng + ?Sized>(n: usize, l: usize, mode: SamplingMode, rng: &mut G) -> Result<Vec<usize>> {
    if l == 0 || l > n {
        return Err(Error::invalid(format!("lot size {l} must be in 1..={n}")));
    }
    let mut idx = match mode {
        SamplingMode::Fixed => rand::seq::index::sample(rng, n, l).into_vec(),
        SamplingMode::Poisson => {
            let q = l as f64 / n as f64;
            (0..n).filter(|_| rng.random::<f64>() < q).collect()
        }
    };
    idx.sort_unstable();
    Ok(idx)
}

fn check_layout<T: Real>(params: &ParamSet<T>, g: &PerExampleGrads<T>) -> Result<()> {
    let ok = g.num_tensors() == params.len()
        && g
            .iter()
            .zip(params.iter())
            .all(|((gn, gt), (pn, pt))| gn == pn && &gt.shape()[1..] == pt.shape());
    if ok {
        Ok(())
    } else {
        Err(Error::Model("per-example gradients do not match the parameters".into()))
    }
}

/// Coordinates per parallel work item in the fused sum.
const BLOCK: usize = 256;

/// One private update `θ ← θ − η·(Σ_i clip(g_i) + ξ) / L`.
///
/// The lot may arrive as several micro-batches. Each example is clipped on
/// the ℓ2 norm of its whole gradient and accumulated straight into the sum,
/// micro-batch by micro-batch and example by example, so the result does
/// not depend on how the lot was split or on the worker count. `ξ` has one
/// standard normal draw per parameter coordinate scaled by `σ·B`, drawn
/// sequentially from `rng` in parameter order.
pub fn dp_sgd_step<T: Real, G: Rng + ?Sized>(
    params: &mut ParamSet<T>,
    micro_batches: &[PerExampleGrads<T>],
    step: &DpStep,
    rng: &mut G,
) -> Result<StepOutcome> {
    if !(step.clip_bound > 0.0) || !(step.noise_multiplier >= 0.0) || !(step.learning_rate > 0.0) {
        return Err(Error::invalid(format!("invalid step settings {step:?}")));
    }
    for g in micro_batches {
        check_layout(params, g)?;
    }
    let lot: usize = micro_batches.iter().map(PerExampleGrads::batch_size).sum();
    if lot == 0 {
        warn!("empty lot; step skipped");
        return Ok(StepOutcome::SkippedEmptyLot);
    }

    let bound = step.clip_bound;
    let scales: Vec<Vec<T>> = micro_batches
        .iter()
        .map(|g| {
            map_indices(g.batch_size(), |i| {
                let sq: f64 = g.iter().flat_map(|(_, t)| t.row(i)).map(|x| x.as_f64() * x.as_f64()).sum();
                T::from_f64(clip_scale(sq.sqrt(), bound))
            })
        })
        .collect();
    if scales.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("dp_sgd_step gradient norm"));
    }

    let mut sums: Vec<Vec<T>> = params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
    for (k, acc) in sums.iter_mut().enumerate() {
        for_each_row(acc, BLOCK, |b, out| {
            let start = b * BLOCK;
            for (g, sc) in micro_batches.iter().zip(&scales) {
                let t = g.iter().nth(k).expect("layout checked").1;
                for (i, &s) in sc.iter().enumerate() {
                    let row = &t.row(i)[start..start + out.len()];
                    for (o, &x) in out.iter_mut().zip(row) {
                        *o += s * x;
                    }
                }
            }
        });
    }

    let std = step.noise_std();
    let scale = T::from_f64(step.learning_rate) / T::from_usize(lot);
    for (acc, theta) in sums.iter_mut().zip(params.values_mut()) {
        for (a, th) in acc.iter_mut().zip(theta.iter_mut()) {
            let z: f64 = rng.sample(StandardNormal);
            *a += T::from_f64(std * z);
            *th -= scale * *a;
        }
    }
    params.ensure_finite()?;
    Ok(StepOutcome::Applied { lot_size: lot })
}

/// Plain averaged SGD: `θ ← θ − η·sum / lot`.
pub fn sgd_step<T: Real>(params: &mut ParamSet<T>, grad_sum: &ParamSet<T>, lot: usize, learning_rate: f64) -> Result<()> {
    if params.shapes() != grad_sum.shapes() {
        return Err(Error::Model("gradient does not match the parameters".into()));
    }
    if lot == 0 {
        return Err(Error::invalid("lot must be non-empty"));
    }
    let scale = T::from_f64(learning_rate) / T::from_usize(lot);
    for (theta, (_, g)) in params.values_mut().zip(grad_sum.iter()) {
        for (th, &x) in theta.iter_mut().zip(g.data()) {
            *th -= scale * x;
        }
    }
    params.ensure_finite()
}
