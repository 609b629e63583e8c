//! Log-moments of the privacy loss of one subsampled Gaussian step.
//!
//! With `ν₀ = N(0, σ²)` and `ν = (1−q)·N(0, σ²) + q·N(1, σ²)` the ratio
//! `r(z) = ν(z)/ν₀(z) = 1 + q·expm1((2z − 1)/(2σ²))`, so
//!
//! ```text
//! E1 − 1 = ∫ ν₀(z)·(r(z)^(−λ)  − 1) dz
//! E2 − 1 = ∫ ν₀(z)·(r(z)^(λ+1) − 1) dz
//! ```
//!
//! Working with `E − 1` keeps full relative precision for small `q`, where
//! both expectations are within rounding of one.

use std::f64::consts::PI;

use super::quadrature::Quadrature;
use crate::error::{Error, Result};

/// Above this maximum log-integrand the expectation is integrated after
/// factoring out `exp(max)`; `E − 1` and `E` are then indistinguishable.
const LOG_SCALE_FROM: f64 = 50.0;

/// Points used to locate the integrand maximum before log scaling.
const SCAN_POINTS: usize = 4096;

/// `ln r(z)` without overflow for large `z` or cancellation for `q` near one.
fn log_ratio(q: f64, s: f64) -> f64 {
    let t = q * s.exp_m1();
    if t.is_finite() && t > -0.5 && t < 1e300 {
        return t.ln_1p();
    }
    let (a, b) = ((1.0 - q).ln(), q.ln() + s);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct Moment {
    q: f64,
    sigma: f64,
    /// Exponent applied to the ratio: `λ + 1` for E2, `−λ` for E1.
    k: f64,
}

impl Moment {
    fn s(&self, z: f64) -> f64 {
        (2.0 * z - 1.0) / (2.0 * self.sigma * self.sigma)
    }

    fn log_nu0(&self, z: f64) -> f64 {
        -z * z / (2.0 * self.sigma * self.sigma) - (self.sigma * (2.0 * PI).sqrt()).ln()
    }

    fn log_integrand(&self, z: f64) -> f64 {
        self.log_nu0(z) + self.k * log_ratio(self.q, self.s(z))
    }

    /// `ν₀(z)·(r(z)^k − 1)`, in log space once the power is far from one.
    fn excess_integrand(&self, z: f64) -> f64 {
        let log_nu0 = self.log_nu0(z);
        let e = self.k * log_ratio(self.q, self.s(z));
        if e.abs() < 1.0 {
            log_nu0.exp() * e.exp_m1()
        } else {
            (log_nu0 + e).exp() - log_nu0.exp()
        }
    }

    /// `ln E`, returned through `ln_1p(E − 1)` when `E` is moderate.
    fn log_expectation(&self, quad: &Quadrature, a: f64, b: f64) -> Result<f64> {
        let step = (b - a) / SCAN_POINTS as f64;
        let peak = (0..=SCAN_POINTS)
            .map(|i| self.log_integrand(a + step * i as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        if peak > LOG_SCALE_FROM {
            let scaled = quad.integrate(|z| (self.log_integrand(z) - peak).exp(), a, b)?;
            return Ok(peak + scaled.ln());
        }
        let excess = quad.integrate(|z| self.excess_integrand(z), a, b)?;
        Ok(excess.max(0.0).ln_1p())
    }
}

/// Integration range: `[−R, 1 + R]` with `R = σ·(20 + λ)`, widened when
/// `σ < 1` so that it still contains the integrand modes near `z = λ + 1`
/// (E2) and `z = −λ` (E1) with a margin of `20σ`.
pub fn integration_range(sigma: f64, lambda: u32) -> (f64, f64) {
    let l = lambda as f64;
    let r = sigma * (20.0 + l);
    ((-r).min(-l - 20.0 * sigma), (1.0 + r).max(l + 1.0 + 20.0 * sigma))
}

/// `α(λ) = ln max(E1, E2)` for one step with sampling ratio `q` and noise
/// multiplier `σ`. Exactly zero when `q = 0`.
pub fn step_log_moment(q: f64, sigma: f64, lambda: u32) -> Result<f64> {
    step_log_moment_with(q, sigma, lambda, &Quadrature::default())
}

pub fn step_log_moment_with(q: f64, sigma: f64, lambda: u32, quad: &Quadrature) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("sampling ratio {q} outside [0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise multiplier {sigma} must be positive")));
    }
    if lambda == 0 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let (a, b) = integration_range(sigma, lambda);
    let l = lambda as f64;
    let e1 = Moment { q, sigma, k: -l }.log_expectation(quad, a, b)?;
    let e2 = Moment { q, sigma, k: l + 1.0 }.log_expectation(quad, a, b)?;
    Ok(e1.max(e2).max(0.0))
}
