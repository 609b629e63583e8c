//! The consumer's training loop.

use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use privml_core::accountant::{calibrate_sigma, MomentLedger, DEFAULT_LAMBDA_MAX};
use privml_core::data::Dataset;
use privml_core::dp::{dp_sgd_step, sgd_step, DpStep};
use privml_core::nn::{
    argmax_rows, backward_aggregate, backward_per_example, model_forward, KernelMode, ModelSpec, ParamSet, PerExampleGrads,
    Targets,
};
use privml_core::oblivious::{scrub_subnormals, ScrubConfig};
use privml_core::rng::{seeded, streams};
use privml_core::Tensor;

use crate::attest::{Measurement, CODE_VERSION};
use crate::consumer::{consumer_fetch_round, order_sessions, ConsumerSession};
use crate::error::{Error, Result};
use crate::events::{Event, EventLog};

/// Everything the consumer needs to run training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub epochs: usize,
    /// Total examples across all providers.
    pub dataset_size: usize,
    pub chunk_examples: usize,
    pub learning_rate: f64,
    pub clip_bound: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub dp: bool,
    pub oblivious: bool,
    pub seed: u64,
    /// Examples per forward/backward pass; the whole lot when absent.
    pub micro_batch: Option<usize>,
    pub timeout_seconds: f64,
    pub scrub_magnitude: f64,
}

impl TrainConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_seconds)
    }

    pub fn mode(&self) -> KernelMode {
        if self.oblivious {
            KernelMode::Oblivious
        } else {
            KernelMode::Baseline
        }
    }

    /// The measurement providers whitelist: every setting that shapes the
    /// training program, but not the seed or the timeout.
    pub fn measurement(&self) -> Result<Measurement> {
        #[derive(Serialize)]
        struct Program {
            epochs: usize,
            dataset_size: usize,
            chunk_examples: usize,
            learning_rate: f64,
            clip_bound: f64,
            epsilon: f64,
            delta: f64,
            dp: bool,
            oblivious: bool,
            micro_batch: Option<usize>,
            scrub_magnitude: f64,
        }
        let p = Program {
            epochs: self.epochs,
            dataset_size: self.dataset_size,
            chunk_examples: self.chunk_examples,
            learning_rate: self.learning_rate,
            clip_bound: self.clip_bound,
            epsilon: self.epsilon,
            delta: self.delta,
            dp: self.dp,
            oblivious: self.oblivious,
            micro_batch: self.micro_batch,
            scrub_magnitude: self.scrub_magnitude,
        };
        Measurement::compute(&self.spec, &p, CODE_VERSION)
    }

    /// Lot size, step counts and the calibrated noise for `providers`.
    pub fn plan(&self, providers: usize) -> Result<TrainPlan> {
        if providers == 0 || self.chunk_examples == 0 || self.epochs == 0 {
            return Err(Error::Config("providers, chunk_examples and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.timeout_seconds > 0.0) {
            return Err(Error::Config("learning rate and timeout must be positive".into()));
        }
        if self.micro_batch == Some(0) {
            return Err(Error::Config("micro_batch must be positive".into()));
        }
        let lot_size = providers * self.chunk_examples;
        if lot_size > self.dataset_size {
            return Err(Error::Config(format!(
                "lot of {lot_size} exceeds the {} available examples",
                self.dataset_size
            )));
        }
        let steps_per_epoch = self.dataset_size / lot_size;
        let total_steps = (self.epochs * steps_per_epoch) as u64;
        let q = lot_size as f64 / self.dataset_size as f64;
        let sigma = if self.dp {
            if !(self.clip_bound > 0.0) {
                return Err(Error::Config("clip bound must be positive".into()));
            }
            Some(calibrate_sigma(self.epsilon, self.delta, q, total_steps)?)
        } else {
            None
        };
        Ok(TrainPlan {
            lot_size,
            steps_per_epoch,
            total_steps,
            q,
            sigma,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub lot_size: usize,
    pub steps_per_epoch: usize,
    pub total_steps: u64,
    pub q: f64,
    /// Noise multiplier; absent without DP.
    pub sigma: Option<f64>,
}

/// Serializes an infinite ε as the string `"inf"`.
pub mod epsilon_format {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad epsilon {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean loss on the held-out set.
    pub loss: f64,
    pub test_accuracy: f64,
    #[serde(with = "epsilon_format")]
    pub epsilon_spent: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet<f32>,
    pub metrics: Vec<EpochMetrics>,
    pub ledger: Option<MomentLedger>,
    pub plan: TrainPlan,
    pub status: TrainStatus,
}

/// Held-out loss and accuracy.
pub fn evaluate(spec: &ModelSpec, params: &ParamSet<f32>, test: &Dataset, mode: KernelMode) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::Config("held-out set is empty".into()));
    }
    let x: Tensor<f32> = test.to_tensor()?;
    let y = Targets::Classes(test.labels().to_vec());
    let pass = model_forward(spec, params, &x, &y, mode)?;
    let hits = argmax_rows(pass.predictions())
        .iter()
        .zip(test.labels())
        .filter(|(&p, &y)| p == y as usize)
        .count();
    Ok((pass.loss() as f64, hits as f64 / test.len() as f64))
}

fn micro_ranges(n: usize, size: Option<usize>) -> Vec<Vec<usize>> {
    let size = size.unwrap_or(n).max(1);
    (0..n).step_by(size).map(|s| (s..(s + size).min(n)).collect()).collect()
}

/// Trains for `cfg.epochs` over the given sessions. Each iteration fetches
/// one chunk from every provider, scrubs the inputs in oblivious mode,
/// computes per-example gradients and applies the private update (or
/// plain SGD when DP is off). `on_epoch` sees every metrics record as it
/// is produced.
pub fn train_loop(
    cfg: &TrainConfig,
    sessions: &mut [ConsumerSession],
    test: &Dataset,
    events: &EventLog,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    order_sessions(sessions)?;
    let plan = cfg.plan(sessions.len())?;
    let layout = sessions[0].layout();
    if layout.chunk_examples != cfg.chunk_examples || layout.dim != cfg.spec.input_len() {
        return Err(Error::Config("session layout does not match the model".into()));
    }
    let mode = cfg.mode();
    let scrub = ScrubConfig {
        magnitude: cfg.scrub_magnitude,
        seed: cfg.seed,
    };
    let mut params: ParamSet<f32> = ParamSet::init(&cfg.spec, &mut seeded(cfg.seed, streams::INIT))?;
    let mut shuffle_rng = seeded(cfg.seed, streams::SHUFFLE);
    let mut noise_rng = seeded(cfg.seed, streams::NOISE);
    let mut scrub_rng = seeded(cfg.seed, streams::SCRUB);
    let mut ledger = plan
        .sigma
        .map(|s| MomentLedger::new(plan.q, s, DEFAULT_LAMBDA_MAX))
        .transpose()?;
    let step = DpStep {
        clip_bound: cfg.clip_bound,
        noise_multiplier: plan.sigma.unwrap_or(0.0),
        learning_rate: cfg.learning_rate,
    };
    info!(
        "training: lot {} over {} providers, {} steps, sigma {:?}",
        plan.lot_size,
        sessions.len(),
        plan.total_steps,
        plan.sigma
    );

    let start = Instant::now();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0u64;
    let mut status = TrainStatus::Completed;
    'epochs: for epoch in 1..=cfg.epochs {
        for _ in 0..plan.steps_per_epoch {
            iteration += 1;
            let lot = consumer_fetch_round(sessions, iteration, cfg.timeout(), &mut shuffle_rng, events)?;
            let mut x: Tensor<f32> = lot.to_tensor()?;
            if cfg.oblivious {
                x = scrub_subnormals(&x, &scrub, &mut scrub_rng)?;
            }
            let y = Targets::Classes(lot.labels().to_vec());
            let parts = micro_ranges(lot.len(), cfg.micro_batch);
            let batches: Vec<(Tensor<f32>, Targets<f32>)> = if parts.len() == 1 {
                vec![(x, y)]
            } else {
                parts
                    .iter()
                    .map(|idx| Ok((x.gather_rows(idx)?, y.select(idx)?)))
                    .collect::<Result<_>>()?
            };
            if let Some(ledger) = ledger.as_mut() {
                let grads = batches
                    .iter()
                    .map(|(xb, yb)| {
                        let pass = model_forward(&cfg.spec, &params, xb, yb, mode)?;
                        Ok(backward_per_example(&cfg.spec, &params, &pass, yb)?)
                    })
                    .collect::<Result<Vec<PerExampleGrads<f32>>>>()?;
                dp_sgd_step(&mut params, &grads, &step, &mut noise_rng)?;
                ledger.accumulate(1);
            } else {
                let mut total: Option<ParamSet<f32>> = None;
                for (xb, yb) in &batches {
                    let pass = model_forward(&cfg.spec, &params, xb, yb, mode)?;
                    let g = backward_aggregate(&cfg.spec, &params, &pass, yb)?;
                    total = Some(match total {
                        None => g,
                        Some(mut t) => {
                            for (acc, (_, gt)) in t.values_mut().zip(g.iter()) {
                                for (a, &b) in acc.iter_mut().zip(gt.data()) {
                                    *a += b;
                                }
                            }
                            t
                        }
                    });
                }
                sgd_step(&mut params, &total.expect("lot is non-empty"), lot.len(), cfg.learning_rate)?;
            }
            events.push(Event::Update {
                iteration,
                private: cfg.dp,
            });
            if let Some(l) = &ledger {
                let spent = l.eps_for_delta(cfg.delta)?;
                if spent > cfg.epsilon {
                    warn!("privacy budget exhausted at iteration {iteration}: {spent} > {}", cfg.epsilon);
                    status = TrainStatus::BudgetExhausted;
                    break 'epochs;
                }
            }
        }
        let (loss, acc) = evaluate(&cfg.spec, &params, test, mode)?;
        let m = EpochMetrics {
            epoch,
            loss,
            test_accuracy: acc,
            epsilon_spent: match &ledger {
                Some(l) => l.eps_for_delta(cfg.delta)?,
                None => f64::INFINITY,
            },
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: loss {loss:.4}, accuracy {acc:.4}, epsilon {}",
            m.epsilon_spent
        );
        events.push(Event::EpochEnd { epoch });
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(TrainOutcome {
        params,
        metrics,
        ledger,
        plan,
        status,
    })
}
