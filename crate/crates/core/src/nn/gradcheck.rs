//! Central finite differences, used as the reference for the backward pass.

use super::model::{model_forward, KernelMode, Targets};
use super::params::ParamSet;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(L(θ + h·e_j) − L(θ − h·e_j)) / 2h` for every coordinate `j`, where `L`
/// is the mean loss over `batch`.
pub fn numeric_gradient(
    spec: &ModelSpec,
    params: &ParamSet<f64>,
    batch: &Tensor<f64>,
    targets: &Targets<f64>,
    h: f64,
) -> Result<ParamSet<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step size {h} must be positive")));
    }
    let loss = |p: &ParamSet<f64>| model_forward(spec, p, batch, targets, KernelMode::Baseline).map(|f| f.loss());
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        let mut g = vec![0.0; t.len()];
        for (j, gj) in g.iter_mut().enumerate() {
            let orig = t.data()[j];
            work.get_mut(name).expect("same names")[j] = orig + h;
            let up = loss(&work)?;
            work.get_mut(name).expect("same names")[j] = orig - h;
            let down = loss(&work)?;
            work.get_mut(name).expect("same names")[j] = orig;
            *gj = (up - down) / (2.0 * h);
        }
        out.push((name.to_string(), Tensor::new(t.shape().to_vec(), g)?));
    }
    ParamSet::new(out)
}

/// Largest elementwise `|a − b| / max(|a|, |b|, floor)` over two gradients
/// with identical layout.
pub fn max_relative_error(a: &ParamSet<f64>, b: &ParamSet<f64>, floor: f64) -> Result<f64> {
    if a.shapes() != b.shapes() {
        return Err(Error::invalid("gradients have different layouts"));
    }
    Ok(a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(&x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max))
}
