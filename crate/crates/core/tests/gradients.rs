#![allow(clippy::needless_range_loop)]

use privml_core::nn::{
    backward_aggregate, backward_per_example, max_relative_error, model_forward, numeric_gradient, KernelMode, Layer,
    ModelSpec, ParamSet, Targets,
};
use privml_core::rng::seeded;
use privml_core::Tensor;
use rand::Rng;

const FLOOR: f64 = 1e-8;

// Zero biases put pre-activations exactly on the ReLU kink whenever every
// input to a unit is zero, where finite differences are meaningless.
fn random_biases(p: ParamSet<f64>, rng: &mut impl Rng) -> ParamSet<f64> {
    let entries = p
        .into_entries()
        .into_iter()
        .map(|(n, t)| {
            let t = if n.ends_with(".bias") {
                Tensor::from_fn(t.shape().to_vec(), |_| rng.random_range(-0.5..0.5)).unwrap()
            } else {
                t
            };
            (n, t)
        })
        .collect();
    ParamSet::new(entries).unwrap()
}

fn random_mlp(seed: u64) -> (ModelSpec, ParamSet<f64>, Tensor<f64>, Targets<f64>) {
    let mut rng = seeded(seed, 0);
    let input = rng.random_range(2..6);
    let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(2..7)).collect();
    let classes = rng.random_range(2..5);
    let spec = ModelSpec::mlp(input, &hidden, classes);
    let params = random_biases(ParamSet::init(&spec, &mut rng).unwrap(), &mut rng);
    let m = 4;
    let x = Tensor::from_fn(vec![m, input], |_| rng.random_range(-2.0..2.0)).unwrap();
    let y = Targets::Classes((0..m).map(|_| rng.random_range(0..classes as u32)).collect());
    (spec, params, x, y)
}

fn small_cnn(seed: u64) -> (ModelSpec, ParamSet<f64>, Tensor<f64>, Targets<f64>) {
    let spec = ModelSpec {
        input: vec![2, 6, 6],
        layers: vec![
            Layer::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            Layer::Relu,
            Layer::MaxPool2d { window: 2 },
            Layer::Flatten,
            Layer::Dense { input: 27, output: 3 },
            Layer::SoftmaxCrossEntropy { classes: 3 },
        ],
    };
    let mut rng = seeded(seed, 0);
    let params = random_biases(ParamSet::init(&spec, &mut rng).unwrap(), &mut rng);
    let x = Tensor::from_fn(vec![3, 2, 6, 6], |_| rng.random_range(-1.0..1.0)).unwrap();
    let y = Targets::Classes(vec![0, 2, 1]);
    (spec, params, x, y)
}

fn check_against_numeric(spec: &ModelSpec, p: &ParamSet<f64>, x: &Tensor<f64>, y: &Targets<f64>, mode: KernelMode) -> f64 {
    let pass = model_forward(spec, p, x, y, mode).unwrap();
    let agg = backward_aggregate(spec, p, &pass, y).unwrap();
    let m = x.shape()[0] as f64;
    let mean = ParamSet::new(
        agg.iter()
            .map(|(n, t)| (n.to_string(), t.map(|v| v / m).unwrap()))
            .collect(),
    )
    .unwrap();
    let num = numeric_gradient(spec, p, x, y, 1e-6).unwrap();
    max_relative_error(&mean, &num, FLOOR).unwrap()
}

#[test]
fn mlp_backward_matches_finite_differences() {
    for seed in 0..20 {
        let (spec, p, x, y) = random_mlp(seed);
        let err = check_against_numeric(&spec, &p, &x, &y, KernelMode::Baseline);
        assert!(err <= 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn cnn_backward_matches_finite_differences() {
    for mode in [KernelMode::Baseline, KernelMode::Oblivious] {
        let (spec, p, x, y) = small_cnn(7);
        let err = check_against_numeric(&spec, &p, &x, &y, mode);
        assert!(err <= 1e-4, "{mode:?}: relative error {err:e}");
    }
}

#[test]
fn per_example_sum_equals_aggregate() {
    for seed in 0..5 {
        let (spec, p, x, y) = random_mlp(100 + seed);
        let pass = model_forward(&spec, &p, &x, &y, KernelMode::Baseline).unwrap();
        let per = backward_per_example(&spec, &p, &pass, &y).unwrap();
        let agg = backward_aggregate(&spec, &p, &pass, &y).unwrap();
        let sum = per.sum_over_batch().unwrap();
        for ((_, a), (_, b)) in sum.iter().zip(agg.iter()) {
            assert!(a.max_abs_diff(b).unwrap() <= 1e-10);
        }
    }
    let (spec, p, x, y) = small_cnn(8);
    let (p32, x32): (ParamSet<f32>, Tensor<f32>) = (p.cast(), x.cast());
    let y32 = Targets::Classes(match &y {
        Targets::Classes(c) => c.clone(),
        Targets::Values(_) => unreachable!(),
    });
    let pass = model_forward(&spec, &p32, &x32, &y32, KernelMode::Oblivious).unwrap();
    let sum = backward_per_example(&spec, &p32, &pass, &y32).unwrap().sum_over_batch().unwrap();
    let agg = backward_aggregate(&spec, &p32, &pass, &y32).unwrap();
    for ((_, a), (_, b)) in sum.iter().zip(agg.iter()) {
        assert!(a.max_abs_diff(b).unwrap() <= 1e-5);
    }
}

#[test]
fn slices_match_single_example_passes() {
    let (spec, p, _, _) = random_mlp(42);
    let mut rng = seeded(43, 0);
    let m = 8;
    let d = spec.input_len();
    let classes = spec.outputs() as u32;
    let x = Tensor::from_fn(vec![m, d], |_| rng.random_range(-1.0..1.0)).unwrap();
    let labels: Vec<u32> = (0..m).map(|_| rng.random_range(0..classes)).collect();
    let y = Targets::Classes(labels.clone());
    let pass = model_forward(&spec, &p, &x, &y, KernelMode::Baseline).unwrap();
    let per = backward_per_example(&spec, &p, &pass, &y).unwrap();
    for i in 0..m {
        let xi = x.gather_rows(&[i]).unwrap();
        let yi = Targets::Classes(vec![labels[i]]);
        let pi = model_forward(&spec, &p, &xi, &yi, KernelMode::Baseline).unwrap();
        let single = backward_aggregate(&spec, &p, &pi, &yi).unwrap();
        for ((_, a), (_, b)) in per.example(i).iter().zip(single.iter()) {
            assert!(a.max_abs_diff(b).unwrap() <= 1e-10, "example {i}");
        }
    }
}

#[test]
fn loss_is_permutation_invariant() {
    let (spec, p, x, y) = random_mlp(9);
    let base = model_forward(&spec, &p, &x, &y, KernelMode::Baseline).unwrap().loss();
    let order = [3, 1, 0, 2];
    let xp = x.gather_rows(&order).unwrap();
    let yp = y.select(&order).unwrap();
    let permuted = model_forward(&spec, &p, &xp, &yp, KernelMode::Baseline).unwrap().loss();
    assert!((base - permuted).abs() <= 1e-12);
}

#[test]
fn oblivious_and_baseline_agree() {
    let (spec, p, x, y) = small_cnn(11);
    let a = model_forward(&spec, &p, &x, &y, KernelMode::Baseline).unwrap();
    let b = model_forward(&spec, &p, &x, &y, KernelMode::Oblivious).unwrap();
    assert_eq!(a.predictions(), b.predictions());
    assert_eq!(a.loss(), b.loss());
    let ga = backward_per_example(&spec, &p, &a, &y).unwrap();
    let gb = backward_per_example(&spec, &p, &b, &y).unwrap();
    assert_eq!(ga, gb);
}

