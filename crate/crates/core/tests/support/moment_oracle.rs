//! Monte-Carlo estimate of the subsampled-Gaussian log-moments.
//!
//! Samples come from an equal mixture of `N(j, σ²)`, `j = 0..=λ_max+1`,
//! which puts mass wherever a term `N(k, σ²)` of the binomially expanded
//! integrand lives. Each estimate uses the zero-mean control variate
//! `u = e^s − 1`:
//!
//! ```text
//! E2 − 1 = E_ν₀[r^(λ+1) − 1 − (λ+1)·q·u]
//! E1 − 1 = E_ν₀[r^(−λ)  − 1 + λ·q·u]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `α(λ)` for every `λ` in `lambdas` from one shared sample.
pub fn log_moments(q: f64, sigma: f64, lambdas: &[u32], samples: usize, seed: u64) -> Vec<f64> {
    let top = lambdas.iter().copied().max().unwrap_or(1) as usize + 1;
    let comps = top + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_s2 = 2.0 * sigma * sigma;
    let mut e1 = vec![0.0f64; lambdas.len()];
    let mut e2 = vec![0.0f64; lambdas.len()];
    let mut b1 = vec![0.0f64; lambdas.len()];
    let mut b2 = vec![0.0f64; lambdas.len()];
    let mut terms = vec![0.0f64; comps];
    for n in 0..samples {
        let j = rng.random_range(0..comps) as f64;
        let z = j + sigma * rng.sample::<f64, _>(StandardNormal);
        // ν₀(z)/p(z) = 1 / mean_j exp((2jz − j²)/(2σ²))
        for (k, t) in terms.iter_mut().enumerate() {
            let k = k as f64;
            *t = (2.0 * k * z - k * k) / two_s2;
        }
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = terms.iter().map(|t| (t - m).exp()).sum::<f64>() / comps as f64;
        let w = (-m).exp() / mean;
        let u = ((2.0 * z - 1.0) / two_s2).exp_m1();
        let l = (q * u).ln_1p();
        for (i, &lam) in lambdas.iter().enumerate() {
            let lam = lam as f64;
            b2[i] += w * (((lam + 1.0) * l).exp_m1() - (lam + 1.0) * q * u);
            b1[i] += w * ((-lam * l).exp_m1() + lam * q * u);
        }
        if n % 4096 == 4095 {
            for i in 0..lambdas.len() {
                e1[i] += std::mem::take(&mut b1[i]);
                e2[i] += std::mem::take(&mut b2[i]);
            }
        }
    }
    (0..lambdas.len())
        .map(|i| {
            let a = (e1[i] + b1[i]) / samples as f64;
            let b = (e2[i] + b2[i]) / samples as f64;
            a.max(b).max(0.0).ln_1p()
        })
        .collect()
}
