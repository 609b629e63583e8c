//! Privacy accounting: linear composition, the moments accountant and noise
//! calibration.

mod moments;
mod quadrature;

pub use moments::{integration_range, step_log_moment, step_log_moment_with};
pub use quadrature::Quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_MAX: u32 = 32;

/// Search range for [`calibrate_sigma`].
pub const SIGMA_RANGE: (f64, f64) = (0.3, 100.0);

/// Accumulated log-moments `α(λ)`, `λ = 1..=lambda_max`, of a run with a
/// fixed sampling ratio and noise multiplier.
///
/// Moments are stored per step and multiplied by the step count on demand,
/// so accumulating in several calls gives exactly the same ledger as one
/// call with the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentLedger {
    q: f64,
    sigma: f64,
    per_step: Vec<f64>,
    steps: u64,
}

impl MomentLedger {
    pub fn new(q: f64, sigma: f64, lambda_max: u32) -> Result<Self> {
        if lambda_max == 0 {
            return Err(Error::invalid("lambda_max must be at least 1"));
        }
        let per_step = (1..=lambda_max)
            .map(|l| step_log_moment(q, sigma, l))
            .collect::<Result<_>>()?;
        Ok(MomentLedger {
            q,
            sigma,
            per_step,
            steps: 0,
        })
    }

    /// Ledger for a mechanism that never touches the data (`α ≡ 0`).
    pub fn zero(lambda_max: u32) -> Self {
        MomentLedger {
            q: 0.0,
            sigma: f64::INFINITY,
            per_step: vec![0.0; lambda_max.max(1) as usize],
            steps: 0,
        }
    }

    pub fn accumulate(&mut self, n_steps: u64) {
        self.steps += n_steps;
    }

    pub fn with_steps(mut self, n_steps: u64) -> Self {
        self.accumulate(n_steps);
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda_max(&self) -> u32 {
        self.per_step.len() as u32
    }

    /// One-step moments, index `λ − 1`.
    pub fn per_step(&self) -> &[f64] {
        &self.per_step
    }

    /// Accumulated `α(λ)`, index `λ − 1`.
    pub fn alpha(&self) -> Vec<f64> {
        self.per_step.iter().map(|&a| a * self.steps as f64).collect()
    }

    /// `min_λ (α(λ) − ln δ) / λ`, rounded up so that
    /// `delta_for_eps(eps_for_delta(δ)) ≤ δ` holds in floating point.
    pub fn eps_for_delta(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta {delta} must lie in (0, 1)")));
        }
        let ln_d = delta.ln();
        let mut eps = self
            .alpha()
            .iter()
            .enumerate()
            .map(|(i, &a)| (a - ln_d) / (i + 1) as f64)
            .fold(f64::INFINITY, f64::min);
        while self.delta_for_eps(eps)? > delta {
            eps = f64::from_bits(eps.to_bits() + 1);
        }
        Ok(eps)
    }

    /// `min_λ exp(α(λ) − λ·ε)`, capped at 1.
    pub fn delta_for_eps(&self, epsilon: f64) -> Result<f64> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon {epsilon} must be positive")));
        }
        Ok(self
            .alpha()
            .iter()
            .enumerate()
            .map(|(i, &a)| (a - (i + 1) as f64 * epsilon).exp())
            .fold(1.0, f64::min))
    }
}

/// The `(n·ε₀, n·δ₀)` composition rule.
pub fn linear_composition(eps0: f64, delta0: f64, n: u64) -> Result<(f64, f64)> {
    if !(eps0 >= 0.0 && eps0.is_finite()) || !(0.0..1.0).contains(&delta0) {
        return Err(Error::invalid(format!("invalid per-step guarantee ({eps0}, {delta0})")));
    }
    Ok((n as f64 * eps0, n as f64 * delta0))
}

pub use linear_composition as strong_composition;

/// Total ε under linear composition of `steps` Gaussian-mechanism steps at
/// noise multiplier `sigma`, each spending `δ / (2·steps)`.
pub fn linear_epsilon(sigma: f64, steps: u64, delta: f64) -> Result<f64> {
    if steps == 0 {
        return Ok(0.0);
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("noise multiplier {sigma} must be positive")));
    }
    let delta0 = delta / (2.0 * steps as f64);
    let eps0 = (2.0 * (1.25 / delta0).ln()).sqrt() / sigma;
    Ok(linear_composition(eps0, delta0, steps)?.0)
}

/// Smallest noise multiplier, to a relative resolution of `1e-4`, for which
/// `steps` steps at sampling ratio `q` stay within `(epsilon, delta)`.
/// The same σ is used for every step, which spreads the budget evenly
/// over all epochs.
pub fn calibrate_sigma(epsilon: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || !(q > 0.0 && q <= 1.0) || steps == 0 {
        return Err(Error::invalid(format!(
            "calibration needs epsilon > 0, 0 < delta < 1, 0 < q <= 1, steps > 0; got ({epsilon}, {delta}, {q}, {steps})"
        )));
    }
    let spent = |sigma: f64| -> Result<f64> {
        MomentLedger::new(q, sigma, DEFAULT_LAMBDA_MAX)?
            .with_steps(steps)
            .eps_for_delta(delta)
    };
    let (mut lo, mut hi) = SIGMA_RANGE;
    let at_hi = spent(hi)?;
    if at_hi > epsilon {
        return Err(Error::Infeasible(format!(
            "epsilon {epsilon} unreachable: even sigma = {hi} spends {at_hi:.4}"
        )));
    }
    if spent(lo)? <= epsilon {
        return Ok(lo);
    }
    while hi / lo > 1.0 + 1e-4 {
        let mid = (lo * hi).sqrt();
        if spent(mid)? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
