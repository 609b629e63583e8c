//! Batched forward pass and reverse-mode backward pass.
//!
//! The backward pass produces per-example gradients with the batch
//! dimension intact: every parameter gradient has a leading dimension `m`
//! and no reduction over examples happens here. Reduction is left to the
//! privacy step, which clips each example before summing.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward_input, conv2d_forward, conv2d_param_grads_per_example, conv2d_param_grads_sum,
    dense_backward_input, dense_forward, dense_param_grads_per_example, dense_param_grads_sum, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, ConvGeometry,
};
use super::params::{bias_name, param_shapes, weight_name, ParamSet};
use super::spec::{Layer, ModelSpec};
use crate::error::{Error, Result};
use crate::oblivious::{omaxpool2d, omaxpool2d_backward, oonehot_into, NoTrace};
use crate::real::Real;
use crate::tensor::Tensor;

/// Which implementation of data-dependent operators the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    /// Branching reference kernels.
    #[default]
    Baseline,
    /// Oblivious pooling and one-hot encoding.
    Oblivious,
}

/// Training targets for a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets<T> {
    /// Class index per example, for the softmax head.
    Classes(Vec<u32>),
    /// `[m, outputs]` real targets, for the squared-error head.
    Values(Tensor<T>),
}

impl<T: Real> Targets<T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(t) => t.shape()[0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        match self {
            Targets::Classes(c) => c.hash(&mut h),
            Targets::Values(t) => t.data().iter().for_each(|x| h.write_u64(x.as_f64().to_bits())),
        }
        h.finish()
    }

    /// Targets for the listed examples.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Values(t) => Targets::Values(t.gather_rows(idx)?),
        })
    }
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    None,
    PoolIndices(Vec<usize>),
    PoolMask(Tensor<T>),
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// `activations[i]` is the batched input to layer `i`.
    activations: Vec<Tensor<T>>,
    caches: Vec<LayerCache<T>>,
    logits: Tensor<T>,
    predictions: Tensor<T>,
    losses: Vec<T>,
    loss: T,
    mode: KernelMode,
    params_fp: u64,
    spec_fp: u64,
    targets_fp: u64,
}

impl<T: Real> ForwardPass<T> {
    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }

    /// Mean loss over the batch.
    pub fn loss(&self) -> T {
        self.loss
    }

    pub fn per_example_losses(&self) -> &[T] {
        &self.losses
    }

    /// Class probabilities (softmax head) or raw outputs (squared head).
    pub fn predictions(&self) -> &Tensor<T> {
        &self.predictions
    }

    pub fn batch_size(&self) -> usize {
        self.logits.shape()[0]
    }
}

/// Gradients of each example's own loss, leading dimension `batch_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleGrads<T> {
    batch_size: usize,
    grads: Vec<(String, Tensor<T>)>,
}

impl<T: Real> PerExampleGrads<T> {
    pub fn new(batch_size: usize, grads: Vec<(String, Tensor<T>)>) -> Result<Self> {
        if grads.iter().any(|(_, t)| t.shape()[0] != batch_size) {
            return Err(Error::invalid("leading dimension differs from batch size"));
        }
        Ok(PerExampleGrads { batch_size, grads })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn num_tensors(&self) -> usize {
        self.grads.len()
    }

    /// Gradient of example `i` as a `ParamSet`-shaped list.
    pub fn example(&self, i: usize) -> Vec<(String, Tensor<T>)> {
        self.grads
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::from_parts(t.shape()[1..].to_vec(), t.row(i).to_vec())))
            .collect()
    }

    /// Gradient of example `i` flattened across all parameters in order.
    pub fn example_flat(&self, i: usize) -> Vec<T> {
        self.grads.iter().flat_map(|(_, t)| t.row(i).iter().copied()).collect()
    }

    /// Gradients of the listed examples only.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let grads = self
            .grads
            .iter()
            .map(|(n, t)| Ok((n.clone(), t.gather_rows(idx)?)))
            .collect::<Result<_>>()?;
        PerExampleGrads::new(idx.len(), grads)
    }

    /// Sum over the batch dimension.
    pub fn sum_over_batch(&self) -> Result<ParamSet<T>> {
        ParamSet::new(
            self.grads
                .iter()
                .map(|(n, t)| Ok((n.clone(), t.sum_leading()?)))
                .collect::<Result<_>>()?,
        )
    }
}

fn spec_fingerprint(spec: &ModelSpec) -> u64 {
    let mut h = DefaultHasher::new();
    spec.hash(&mut h);
    h.finish()
}

fn param<'a, T: Real>(params: &'a ParamSet<T>, name: &str) -> Result<&'a Tensor<T>> {
    params
        .get(name)
        .ok_or_else(|| Error::Model(format!("missing parameter {name}")))
}

/// Reshapes a batch to `[m, ...spec.input]`, accepting flat rows too.
fn shape_batch<T: Real>(spec: &ModelSpec, batch: &Tensor<T>) -> Result<Tensor<T>> {
    let mut want = vec![batch.shape()[0]];
    want.extend(&spec.input);
    if batch.shape() == want.as_slice() {
        return Ok(batch.clone());
    }
    if batch.rank() >= 2 && batch.row_len() == spec.input_len() {
        return batch.clone().reshape(want);
    }
    Err(Error::Shape {
        op: "model_forward",
        left: batch.shape().to_vec(),
        right: want,
    })
}

fn check_targets<T: Real>(spec: &ModelSpec, m: usize, targets: &Targets<T>) -> Result<()> {
    if targets.len() != m {
        return Err(Error::invalid(format!("{} targets for a batch of {m}", targets.len())));
    }
    match (spec.head(), targets) {
        (Layer::SoftmaxCrossEntropy { classes }, Targets::Classes(c)) => {
            if let Some(bad) = c.iter().find(|&&y| y as usize >= *classes) {
                return Err(Error::invalid(format!("label {bad} outside 0..{classes}")));
            }
            Ok(())
        }
        (Layer::SquaredError { outputs }, Targets::Values(t)) if t.shape() == [m, *outputs] => Ok(()),
        _ => Err(Error::invalid("targets do not match the model head")),
    }
}

struct Trunk<T> {
    activations: Vec<Tensor<T>>,
    caches: Vec<LayerCache<T>>,
    logits: Tensor<T>,
}

fn run_trunk<T: Real>(spec: &ModelSpec, params: &ParamSet<T>, batch: &Tensor<T>, mode: KernelMode) -> Result<Trunk<T>> {
    spec.validate()?;
    params.check_against(spec)?;
    let x = shape_batch(spec, batch)?;
    let n_body = spec.layers.len() - 1;
    let mut activations = Vec::with_capacity(n_body + 1);
    let mut caches = Vec::with_capacity(n_body);
    let mut cur = x;
    for (i, layer) in spec.layers[..n_body].iter().enumerate() {
        let (next, cache) = match *layer {
            Layer::Dense { .. } => (
                dense_forward(&cur, param(params, &weight_name(i))?, param(params, &bias_name(i))?)?,
                LayerCache::None,
            ),
            Layer::Relu => (relu_forward(&cur), LayerCache::None),
            Layer::Conv2d { stride, padding, .. } => (
                conv2d_forward(
                    &cur,
                    param(params, &weight_name(i))?,
                    param(params, &bias_name(i))?,
                    stride,
                    padding,
                )?,
                LayerCache::None,
            ),
            Layer::MaxPool2d { window } => match mode {
                KernelMode::Baseline => {
                    let (y, idx) = maxpool_forward(&cur, window)?;
                    (y, LayerCache::PoolIndices(idx))
                }
                KernelMode::Oblivious => {
                    let (y, mask) = omaxpool2d(&cur, window, window)?;
                    (y, LayerCache::PoolMask(mask))
                }
            },
            Layer::Flatten => {
                let m = cur.shape()[0];
                let w = cur.row_len();
                (cur.clone().reshape(vec![m, w])?, LayerCache::None)
            }
            Layer::SoftmaxCrossEntropy { .. } | Layer::SquaredError { .. } => unreachable!("head is last"),
        };
        next.ensure_finite("model_forward")?;
        activations.push(cur);
        caches.push(cache);
        cur = next;
    }
    Ok(Trunk {
        activations,
        caches,
        logits: cur,
    })
}

/// Row-wise softmax; returns probabilities and log-sum-exp per row.
fn softmax_rows<T: Real>(logits: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let k = logits.shape()[1];
    let mut probs = Vec::with_capacity(logits.len());
    let mut lse = Vec::with_capacity(logits.shape()[0]);
    for z in logits.data().chunks(k) {
        let mx = z.iter().copied().fold(z[0], T::max);
        let e: Vec<T> = z.iter().map(|&v| (v - mx).exp()).collect();
        let s: T = e.iter().copied().sum();
        probs.extend(e.iter().map(|&v| v / s));
        lse.push(mx + s.ln());
    }
    (Tensor::from_parts(logits.shape().to_vec(), probs), lse)
}

/// Logit of the labelled class: an index in baseline mode, a dot product
/// with an oblivious one-hot row otherwise.
fn label_logit<T: Real>(z: &[T], y: u32, mode: KernelMode) -> T {
    match mode {
        KernelMode::Baseline => z[y as usize],
        KernelMode::Oblivious => {
            let mut hot = vec![T::zero(); z.len()];
            oonehot_into(y, &mut hot, &mut NoTrace);
            hot.iter().zip(z).map(|(&h, &v)| h * v).sum()
        }
    }
}

/// Runs the model on `batch` (`[m, ...input]` or `[m, input_len]`) and
/// evaluates the loss against `targets`. The returned pass keeps every
/// intermediate activation for [`backward_per_example`].
pub fn model_forward<T: Real>(
    spec: &ModelSpec,
    params: &ParamSet<T>,
    batch: &Tensor<T>,
    targets: &Targets<T>,
    mode: KernelMode,
) -> Result<ForwardPass<T>> {
    let m = batch.shape()[0];
    check_targets(spec, m, targets)?;
    let trunk = run_trunk(spec, params, batch, mode)?;
    let logits = trunk.logits;
    let (predictions, losses) = match (spec.head(), targets) {
        (Layer::SoftmaxCrossEntropy { classes }, Targets::Classes(labels)) => {
            let (probs, lse) = softmax_rows(&logits);
            let losses: Vec<T> = logits
                .data()
                .chunks(*classes)
                .zip(labels)
                .zip(&lse)
                .map(|((z, &y), &l)| l - label_logit(z, y, mode))
                .collect();
            (probs, losses)
        }
        (Layer::SquaredError { outputs }, Targets::Values(t)) => {
            let losses: Vec<T> = logits
                .data()
                .chunks(*outputs)
                .zip(t.data().chunks(*outputs))
                .map(|(z, y)| z.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum())
                .collect();
            (logits.clone(), losses)
        }
        _ => unreachable!("checked by check_targets"),
    };
    let total: T = losses.iter().copied().sum();
    let loss = total / T::from_usize(m);
    if !loss.is_finite() {
        return Err(Error::NonFinite("model_forward loss"));
    }
    Ok(ForwardPass {
        activations: trunk.activations,
        caches: trunk.caches,
        logits,
        predictions,
        losses,
        loss,
        mode,
        params_fp: params.fingerprint(),
        spec_fp: spec_fingerprint(spec),
        targets_fp: targets.fingerprint(),
    })
}

/// Class probabilities (or regression outputs) for `batch`.
pub fn predict<T: Real>(spec: &ModelSpec, params: &ParamSet<T>, batch: &Tensor<T>, mode: KernelMode) -> Result<Tensor<T>> {
    let trunk = run_trunk(spec, params, batch, mode)?;
    Ok(match spec.head() {
        Layer::SoftmaxCrossEntropy { .. } => softmax_rows(&trunk.logits).0,
        _ => trunk.logits,
    })
}

/// Index of the largest entry per row; first index wins ties.
pub fn argmax_rows<T: Real>(probs: &Tensor<T>) -> Vec<usize> {
    let k = probs.row_len();
    probs
        .data()
        .chunks(k)
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, r[0]), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Reduction {
    PerExample,
    Sum,
}

fn head_delta<T: Real>(spec: &ModelSpec, pass: &ForwardPass<T>, targets: &Targets<T>) -> Tensor<T> {
    match (spec.head(), targets) {
        (Layer::SoftmaxCrossEntropy { classes }, Targets::Classes(labels)) => {
            let mut d = pass.predictions.data().to_vec();
            for (row, &y) in d.chunks_mut(*classes).zip(labels) {
                match pass.mode {
                    KernelMode::Baseline => row[y as usize] -= T::one(),
                    KernelMode::Oblivious => {
                        let mut hot = vec![T::zero(); *classes];
                        oonehot_into(y, &mut hot, &mut NoTrace);
                        row.iter_mut().zip(&hot).for_each(|(r, &h)| *r -= h);
                    }
                }
            }
            Tensor::from_parts(pass.predictions.shape().to_vec(), d)
        }
        (Layer::SquaredError { .. }, Targets::Values(t)) => {
            let two = T::from_f64(2.0);
            let d = pass
                .logits
                .data()
                .iter()
                .zip(t.data())
                .map(|(&z, &y)| two * (z - y))
                .collect();
            Tensor::from_parts(pass.logits.shape().to_vec(), d)
        }
        _ => unreachable!("checked by check_targets"),
    }
}

fn backward_impl<T: Real>(
    spec: &ModelSpec,
    params: &ParamSet<T>,
    pass: &ForwardPass<T>,
    targets: &Targets<T>,
    reduction: Reduction,
) -> Result<Vec<(String, Tensor<T>)>> {
    if pass.spec_fp != spec_fingerprint(spec) {
        return Err(Error::StaleActivations("model spec differs from the forward pass".into()));
    }
    if pass.params_fp != params.fingerprint() {
        return Err(Error::StaleActivations("parameters changed since the forward pass".into()));
    }
    check_targets(spec, pass.batch_size(), targets)?;
    if pass.targets_fp != targets.fingerprint() {
        return Err(Error::StaleActivations("targets differ from the forward pass".into()));
    }
    let order = param_shapes(spec);
    let mut slots: Vec<Option<Tensor<T>>> = vec![None; order.len()];
    let mut put = |name: String, t: Tensor<T>| {
        let at = order.iter().position(|(n, _)| *n == name).expect("known parameter");
        slots[at] = Some(t);
    };

    let mut delta = head_delta(spec, pass, targets);
    let n_body = spec.layers.len() - 1;
    for i in (0..n_body).rev() {
        let x = &pass.activations[i];
        let need_input_grad = i > 0;
        match (&spec.layers[i], &pass.caches[i]) {
            (Layer::Dense { .. }, _) => {
                let (gw, gb) = match reduction {
                    Reduction::PerExample => dense_param_grads_per_example(x, &delta),
                    Reduction::Sum => dense_param_grads_sum(x, &delta),
                };
                put(weight_name(i), gw);
                put(bias_name(i), gb);
                if need_input_grad {
                    delta = dense_backward_input(&delta, param(params, &weight_name(i))?);
                }
            }
            (Layer::Relu, _) => delta = relu_backward(&delta, x)?,
            (Layer::Conv2d { stride, padding, .. }, _) => {
                let w = param(params, &weight_name(i))?;
                let g = ConvGeometry::new(x.shape(), w.shape(), *stride, *padding)?;
                let (gw, gb) = match reduction {
                    Reduction::PerExample => conv2d_param_grads_per_example(x, &delta, &g),
                    Reduction::Sum => conv2d_param_grads_sum(x, &delta, &g),
                };
                put(weight_name(i), gw);
                put(bias_name(i), gb);
                if need_input_grad {
                    delta = conv2d_backward_input(&delta, w, &g);
                }
            }
            (Layer::MaxPool2d { .. }, LayerCache::PoolIndices(idx)) => {
                delta = maxpool_backward(&delta, idx, x.shape())?;
            }
            (Layer::MaxPool2d { window }, LayerCache::PoolMask(mask)) => {
                delta = omaxpool2d_backward(&delta, mask, x.shape(), *window, *window)?;
            }
            (Layer::Flatten, _) => delta = delta.reshape(x.shape().to_vec())?,
            (layer, _) => {
                return Err(Error::StaleActivations(format!(
                    "cache does not match layer {i} ({})",
                    layer.name()
                )))
            }
        }
    }
    Ok(order
        .into_iter()
        .zip(slots)
        .map(|((n, _), t)| (n, t.expect("every parameter receives a gradient")))
        .collect())
}

/// Gradient of every example's own loss `ℓ_i` with the batch dimension kept.
///
/// Fails with [`Error::StaleActivations`] when `pass` was produced for a
/// different spec, different parameter values or different targets.
pub fn backward_per_example<T: Real>(
    spec: &ModelSpec,
    params: &ParamSet<T>,
    pass: &ForwardPass<T>,
    targets: &Targets<T>,
) -> Result<PerExampleGrads<T>> {
    let grads = backward_impl(spec, params, pass, targets, Reduction::PerExample)?;
    PerExampleGrads::new(pass.batch_size(), grads)
}

/// Gradient of the summed loss `Σ_i ℓ_i`, reduced over the batch inside
/// each layer (matrix products for dense layers, a single accumulator per
/// weight for convolutions).
pub fn backward_aggregate<T: Real>(
    spec: &ModelSpec,
    params: &ParamSet<T>,
    pass: &ForwardPass<T>,
    targets: &Targets<T>,
) -> Result<ParamSet<T>> {
    ParamSet::new(backward_impl(spec, params, pass, targets, Reduction::Sum)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn linear(w: f64, b: f64) -> (ModelSpec, ParamSet<f64>) {
        let spec = ModelSpec {
            input: vec![1],
            layers: vec![Layer::Dense { input: 1, output: 1 }, Layer::SquaredError { outputs: 1 }],
        };
        let p = ParamSet::new(vec![
            ("layer0.weight".into(), Tensor::new(vec![1, 1], vec![w]).unwrap()),
            ("layer0.bias".into(), Tensor::new(vec![1], vec![b]).unwrap()),
        ])
        .unwrap();
        (spec, p)
    }

    #[test]
    fn single_dense_is_identity() {
        let (spec, p) = linear(1.0, 0.0);
        let x = Tensor::new(vec![1, 1], vec![2.5]).unwrap();
        let y = predict(&spec, &p, &x, KernelMode::Baseline).unwrap();
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn symmetric_logits_give_ln2() {
        let spec = ModelSpec {
            input: vec![2],
            layers: vec![Layer::SoftmaxCrossEntropy { classes: 2 }],
        };
        let p = ParamSet::new(vec![]).unwrap();
        let x = Tensor::new(vec![2, 2], vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        for mode in [KernelMode::Baseline, KernelMode::Oblivious] {
            let pass = model_forward(&spec, &p, &x, &Targets::Classes(vec![0, 1]), mode).unwrap();
            assert_eq!(pass.predictions().data(), &[0.5; 4]);
            assert!((pass.loss() - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn squared_loss_per_example_grad() {
        let (spec, p) = linear(1.0, 0.0);
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let t = Targets::Values(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let pass = model_forward(&spec, &p, &x, &t, KernelMode::Baseline).unwrap();
        let g = backward_per_example(&spec, &p, &pass, &t).unwrap();
        assert_eq!(g.iter().next().unwrap().1.data(), &[-2.0]);
    }

    #[test]
    fn identical_examples_identical_slices() {
        let spec = ModelSpec::mlp(4, &[5], 3);
        let p: ParamSet<f64> = ParamSet::init(&spec, &mut seeded(3, 0)).unwrap();
        let row = [0.3, -1.2, 0.7, 2.0];
        let x = Tensor::new(vec![6, 4], row.repeat(6)).unwrap();
        let t = Targets::Classes(vec![1; 6]);
        let pass = model_forward(&spec, &p, &x, &t, KernelMode::Baseline).unwrap();
        let g = backward_per_example(&spec, &p, &pass, &t).unwrap();
        let first = g.example_flat(0);
        for i in 1..6 {
            assert_eq!(g.example_flat(i), first);
        }
    }

    #[test]
    fn stale_pass_rejected() {
        let spec = ModelSpec::mlp(3, &[4], 2);
        let mut p: ParamSet<f64> = ParamSet::init(&spec, &mut seeded(4, 0)).unwrap();
        let x = Tensor::from_fn(vec![2, 3], |i| i as f64 / 3.0).unwrap();
        let t = Targets::Classes(vec![0, 1]);
        let pass = model_forward(&spec, &p, &x, &t, KernelMode::Baseline).unwrap();
        p.get_mut("layer0.weight").unwrap()[0] += 0.5;
        assert!(matches!(
            backward_per_example(&spec, &p, &pass, &t),
            Err(Error::StaleActivations(_))
        ));
        let (spec2, p2) = (ModelSpec::mlp(3, &[4], 2), p.clone());
        let pass2 = model_forward(&spec2, &p2, &x, &t, KernelMode::Baseline).unwrap();
        assert!(matches!(
            backward_per_example(&spec2, &p2, &pass2, &Targets::Classes(vec![1, 1])),
            Err(Error::StaleActivations(_))
        ));
    }

    #[test]
    fn bad_targets_rejected() {
        let spec = ModelSpec::mlp(2, &[], 2);
        let p: ParamSet<f32> = ParamSet::init(&spec, &mut seeded(5, 0)).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
        assert!(model_forward(&spec, &p, &x, &Targets::Classes(vec![2]), KernelMode::Baseline).is_err());
        assert!(model_forward(&spec, &p, &x, &Targets::Classes(vec![0, 0]), KernelMode::Baseline).is_err());
        let wrong = Tensor::new(vec![1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        assert!(model_forward(&spec, &p, &wrong, &Targets::Classes(vec![0]), KernelMode::Baseline).is_err());
    }

    #[test]
    fn blow_up_is_an_error() {
        let (spec, mut p) = linear(1e300, 0.0);
        p.get_mut("layer0.weight").unwrap()[0] = f64::MAX;
        let x = Tensor::new(vec![1, 1], vec![10.0]).unwrap();
        let t = Targets::Values(Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        assert!(matches!(
            model_forward(&spec, &p, &x, &t, KernelMode::Baseline),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn argmax_first_wins() {
        let p = Tensor::new(vec![2, 3], vec![0.2, 0.4, 0.4, 0.9, 0.05, 0.05]).unwrap();
        assert_eq!(argmax_rows(&p), vec![1, 0]);
    }
}
