use privml_core::dp::{clip_grad, dp_sgd_step, sgd_step, DpStep, StepOutcome};
use privml_core::nn::{backward_per_example, model_forward, KernelMode, ModelSpec, ParamSet, PerExampleGrads, Targets};
use privml_core::rng::{seeded, CountingRng};
use privml_core::Tensor;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn lot(seed: u64, m: usize) -> (ModelSpec, ParamSet<f64>, Tensor<f64>, Targets<f64>) {
    let spec = ModelSpec::mlp(6, &[8], 3);
    let mut rng = seeded(seed, 0);
    let p = ParamSet::init(&spec, &mut rng).unwrap();
    let x = Tensor::from_fn(vec![m, 6], |_| rng.random_range(-3.0..3.0)).unwrap();
    let y = Targets::Classes((0..m).map(|_| rng.random_range(0..3)).collect());
    (spec, p, x, y)
}

fn grads(spec: &ModelSpec, p: &ParamSet<f64>, x: &Tensor<f64>, y: &Targets<f64>) -> PerExampleGrads<f64> {
    let pass = model_forward(spec, p, x, y, KernelMode::Baseline).unwrap();
    backward_per_example(spec, p, &pass, y).unwrap()
}

/// Clip each example separately, average, step. No fusion, no noise.
fn naive_update(p: &ParamSet<f64>, g: &PerExampleGrads<f64>, bound: f64, lr: f64) -> Vec<f64> {
    let m = g.batch_size();
    let mut mean = vec![0.0; p.num_scalars()];
    for i in 0..m {
        let c = clip_grad(&g.example_flat(i), bound).unwrap();
        mean.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    p.flatten()
        .iter()
        .zip(&mean)
        .map(|(t, s)| t - lr * s / m as f64)
        .collect()
}

const NOISY: DpStep = DpStep {
    clip_bound: 0.5,
    noise_multiplier: 1.1,
    learning_rate: 0.2,
};

#[test]
fn noiseless_step_equals_naive_oracle() {
    let (spec, p, x, y) = lot(1, 16);
    let g = grads(&spec, &p, &x, &y);
    for bound in [0.05, 0.5, 5.0] {
        let mut fused = p.clone();
        let step = DpStep {
            clip_bound: bound,
            noise_multiplier: 0.0,
            learning_rate: 0.3,
        };
        dp_sgd_step(&mut fused, std::slice::from_ref(&g), &step, &mut seeded(0, 0)).unwrap();
        let want = naive_update(&p, &g, bound, 0.3);
        for (a, b) in fused.flatten().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn unbounded_noiseless_step_is_plain_sgd() {
    let (spec, p, x, y) = lot(2, 8);
    let g = grads(&spec, &p, &x, &y);
    let mut fused = p.clone();
    let step = DpStep {
        clip_bound: f64::INFINITY,
        noise_multiplier: 0.0,
        learning_rate: 0.1,
    };
    dp_sgd_step(&mut fused, std::slice::from_ref(&g), &step, &mut seeded(0, 0)).unwrap();
    let mut plain = p.clone();
    sgd_step(&mut plain, &g.sum_over_batch().unwrap(), 8, 0.1).unwrap();
    assert_eq!(fused, plain);
}

#[test]
fn partition_into_micro_batches_is_bit_exact() {
    let (spec, p, x, y) = lot(3, 12);
    let whole = grads(&spec, &p, &x, &y);
    let mut reference = p.clone();
    dp_sgd_step(&mut reference, std::slice::from_ref(&whole), &NOISY, &mut seeded(7, 2)).unwrap();
    for sizes in [vec![4, 8], vec![1, 1, 10], vec![5, 5, 2], vec![3; 4]] {
        let mut start = 0;
        let mut parts = Vec::new();
        for s in sizes {
            let idx: Vec<usize> = (start..start + s).collect();
            let (xs, ys) = (x.gather_rows(&idx).unwrap(), y.select(&idx).unwrap());
            parts.push(grads(&spec, &p, &xs, &ys));
            start += s;
        }
        let mut q = p.clone();
        dp_sgd_step(&mut q, &parts, &NOISY, &mut seeded(7, 2)).unwrap();
        assert_eq!(q, reference);
    }
}

#[test]
fn worker_count_does_not_change_result() {
    let (spec, p, x, y) = lot(4, 64);
    let g = grads(&spec, &p, &x, &y);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let mut q = p.clone();
                dp_sgd_step(&mut q, std::slice::from_ref(&g), &NOISY, &mut seeded(11, 2)).unwrap();
                q
            })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(4));
}

#[test]
fn noise_is_one_draw_per_coordinate() {
    let (spec, p, x, y) = lot(5, 32);
    let g = grads(&spec, &p, &x, &y);
    let mut fused = CountingRng::new(seeded(3, 2));
    let mut q = p.clone();
    let out = dp_sgd_step(&mut q, std::slice::from_ref(&g), &NOISY, &mut fused).unwrap();
    assert_eq!(out, StepOutcome::Applied { lot_size: 32 });
    let mut oracle = CountingRng::new(seeded(3, 2));
    for _ in 0..p.num_scalars() {
        let _: f64 = oracle.sample(StandardNormal);
    }
    assert_eq!(fused.words(), oracle.words());
    // Drawing per example would need 32 times as many normals.
    let mut per_example = CountingRng::new(seeded(3, 2));
    for _ in 0..32 * p.num_scalars() {
        let _: f64 = per_example.sample(StandardNormal);
    }
    assert!(per_example.words() > 16 * fused.words());
}

#[test]
fn noisy_update_is_unbiased() {
    let (spec, p, x, y) = lot(6, 10);
    let g = grads(&spec, &p, &x, &y);
    let target = naive_update(&p, &g, NOISY.clip_bound, 1.0);
    let theta = p.flatten();
    let clipped_mean: Vec<f64> = theta.iter().zip(&target).map(|(t, u)| t - u).collect();
    let reps = 10_000;
    let mut rng = seeded(99, 2);
    let mut mean = vec![0.0; theta.len()];
    for _ in 0..reps {
        let mut q = p.clone();
        dp_sgd_step(&mut q, std::slice::from_ref(&g), &NOISY, &mut rng).unwrap();
        for ((m, a), b) in mean.iter_mut().zip(&theta).zip(q.flatten()) {
            *m += (a - b) / NOISY.learning_rate / reps as f64;
        }
    }
    let tol = 3.0 * NOISY.noise_std() / ((10 * reps) as f64).sqrt();
    for (m, c) in mean.iter().zip(&clipped_mean) {
        assert!((m - c).abs() <= tol, "{m} vs {c} (tol {tol})");
    }
}

#[test]
fn same_seed_same_parameters() {
    let (spec, p, x, y) = lot(7, 9);
    let g = grads(&spec, &p, &x, &y);
    let run = || {
        let mut q = p.clone();
        dp_sgd_step(&mut q, std::slice::from_ref(&g), &NOISY, &mut seeded(5, 2)).unwrap();
        q.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn mismatched_gradients_rejected() {
    let (spec, p, x, y) = lot(8, 4);
    let g = grads(&spec, &p, &x, &y);
    let other = ParamSet::init(&ModelSpec::mlp(6, &[5], 3), &mut seeded(0, 0)).unwrap();
    let mut q: ParamSet<f64> = other;
    assert!(dp_sgd_step(&mut q, &[g], &NOISY, &mut seeded(0, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn clipped_norm_within_bound(g in prop::collection::vec(-1e6f64..1e6, 1..40), bound in 1e-3f64..1e3) {
        let c = clip_grad(&g, bound).unwrap();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= bound + 1e-12);
        let original = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if original <= bound {
            prop_assert_eq!(c, g);
        }
    }
}
