//! The subcommands, as library functions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::json;

use privml_core::accountant::{linear_epsilon, MomentLedger};
use privml_core::nn::{predict, KernelMode, ModelSpec};
use privml_core::Tensor;
use privml_federation::local::local_provider;
use privml_federation::{
    run_local, run_remote, serve_tcp, ChunkLayout, EpochMetrics, EventLog, LocalOptions, ProviderReport, TrainOutcome,
    TrainStatus, TransportKind,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::params_file;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.to_path_buf(), e)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// What `train` produced.
#[derive(Debug)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub output: PathBuf,
    /// Completed, and ε within target when DP is on.
    pub ok: bool,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PARAMS_FILE: &str = "params.bin";
pub const MODEL_FILE: &str = "model.json";
pub const LEDGER_FILE: &str = "ledger.json";
pub const CONFIG_FILE: &str = "config.json";

fn ledger_snapshot(cfg: &RunConfig, outcome: &TrainOutcome) -> Result<serde_json::Value> {
    Ok(match &outcome.ledger {
        Some(l) => json!({
            "dp": true,
            "accounting": "moments",
            "sampling": "poisson-approx",
            "q": l.q(),
            "sigma": l.sigma(),
            "steps": l.steps(),
            "lambda_max": l.lambda_max(),
            "log_moments": l.alpha(),
            "delta": cfg.privacy.delta,
            "epsilon_spent": l.eps_for_delta(cfg.privacy.delta)?,
            "epsilon_target": cfg.privacy.epsilon,
        }),
        None => json!({ "dp": false, "epsilon_spent": "inf" }),
    })
}

/// Runs training and writes config, model, metrics, parameters and ledger
/// into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let data = cfg.load_data()?;
    let tc = cfg.train_config(&data)?;
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join(CONFIG_FILE), cfg.canonical().as_bytes())?;
    let spec_json = serde_json::to_string_pretty(&tc.spec).expect("spec is serializable") + "\n";
    write_file(&dir.join(MODEL_FILE), spec_json.as_bytes())?;

    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    let mut write_err = None;
    let on_epoch = |m: &EpochMetrics| {
        let line = serde_json::to_string(m).expect("metrics are serializable");
        if let Err(e) = writeln!(metrics, "{line}").and_then(|_| metrics.flush()) {
            write_err.get_or_insert(e);
        }
    };

    let outcome = match &cfg.providers.addresses {
        Some(addrs) => {
            if cfg.providers.transport != TransportKind::Tcp || addrs.len() != cfg.providers.count {
                return Err(CliError::Config(format!(
                    "{} addresses given for {} providers; remote providers need the tcp transport",
                    addrs.len(),
                    cfg.providers.count
                )));
            }
            let layout = ChunkLayout {
                chunk_examples: tc.chunk_examples,
                dim: data.train.dim(),
                classes: data.train.classes(),
            };
            let addrs: Vec<(u32, String)> = addrs.iter().enumerate().map(|(i, a)| (i as u32, a.clone())).collect();
            run_remote(&tc, &addrs, layout, &data.test, &EventLog::new(), on_epoch)?
        }
        None => {
            let opts = LocalOptions {
                transport: cfg.providers.transport,
                ..Default::default()
            };
            run_local(&tc, cfg.shards(&data), &data.test, &opts, on_epoch)?.outcome
        }
    };
    if let Some(e) = write_err {
        return Err(CliError::Io(metrics_path, e));
    }
    write_file(&dir.join(PARAMS_FILE), &params_file::encode(&tc.spec, &outcome.params))?;
    let ledger = ledger_snapshot(cfg, &outcome)?;
    write_file(
        &dir.join(LEDGER_FILE),
        (serde_json::to_string_pretty(&ledger).expect("ledger is serializable") + "\n").as_bytes(),
    )?;
    let within = outcome
        .metrics
        .last()
        .is_none_or(|m| !cfg.dp || m.epsilon_spent <= cfg.privacy.epsilon);
    let ok = outcome.status == TrainStatus::Completed && within;
    Ok(TrainReport { outcome, output: dir, ok })
}

/// Which side of the guarantee `audit` is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuditTarget {
    Delta(f64),
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditQuery {
    pub q: f64,
    pub sigma: f64,
    pub steps: u64,
    pub target: AuditTarget,
    pub lambda_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AuditReport {
    Epsilon {
        q: f64,
        sigma: f64,
        steps: u64,
        lambda_max: u32,
        delta: f64,
        moments_epsilon: f64,
        linear_epsilon: f64,
        ratio: f64,
    },
    Delta {
        q: f64,
        sigma: f64,
        steps: u64,
        lambda_max: u32,
        epsilon: f64,
        moments_delta: f64,
        linear_delta: f64,
        ratio: f64,
    },
}

/// Smallest δ for which linear composition reaches `epsilon`, or 1 when
/// none does.
fn linear_delta(sigma: f64, steps: u64, epsilon: f64) -> Result<f64> {
    let at = |ln_d: f64| linear_epsilon(sigma, steps, ln_d.exp());
    let (mut lo, mut hi) = (-700.0f64, (1.0 - 1e-12f64).ln());
    if at(hi)? > epsilon {
        return Ok(1.0);
    }
    if at(lo)? <= epsilon {
        return Ok(lo.exp());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

pub fn cmd_audit(a: &AuditQuery) -> Result<AuditReport> {
    if !(a.sigma > 0.0) || a.steps == 0 || a.lambda_max == 0 {
        return Err(CliError::Config("audit needs sigma > 0, steps > 0 and lambda_max > 0".into()));
    }
    let ledger = MomentLedger::new(a.q, a.sigma, a.lambda_max)?.with_steps(a.steps);
    Ok(match a.target {
        AuditTarget::Delta(delta) => {
            let ma = ledger.eps_for_delta(delta)?;
            let lin = linear_epsilon(a.sigma, a.steps, delta)?;
            AuditReport::Epsilon {
                q: a.q,
                sigma: a.sigma,
                steps: a.steps,
                lambda_max: a.lambda_max,
                delta,
                moments_epsilon: ma,
                linear_epsilon: lin,
                ratio: ma / lin,
            }
        }
        AuditTarget::Epsilon(epsilon) => {
            let ma = ledger.delta_for_eps(epsilon)?;
            let lin = linear_delta(a.sigma, a.steps, epsilon)?;
            AuditReport::Delta {
                q: a.q,
                sigma: a.sigma,
                steps: a.steps,
                lambda_max: a.lambda_max,
                epsilon,
                moments_delta: ma,
                linear_delta: lin,
                ratio: ma / lin,
            }
        }
    })
}

pub fn format_audit(r: &AuditReport) -> String {
    let mut s = String::from("accounting model: poisson-approx\n");
    match r {
        AuditReport::Epsilon {
            q,
            sigma,
            steps,
            lambda_max,
            delta,
            moments_epsilon,
            linear_epsilon,
            ratio,
        } => {
            s += &format!("q {q}  sigma {sigma}  steps {steps}  lambda_max {lambda_max}  delta {delta:e}\n");
            s += &format!("{:<28}{moments_epsilon:.6}\n", "moments accountant epsilon");
            s += &format!("{:<28}{linear_epsilon:.6}\n", "linear composition epsilon");
            s += &format!("{:<28}{ratio:.6}\n", "ratio (moments / linear)");
        }
        AuditReport::Delta {
            q,
            sigma,
            steps,
            lambda_max,
            epsilon,
            moments_delta,
            linear_delta,
            ratio,
        } => {
            s += &format!("q {q}  sigma {sigma}  steps {steps}  lambda_max {lambda_max}  epsilon {epsilon}\n");
            s += &format!("{:<28}{moments_delta:e}\n", "moments accountant delta");
            s += &format!("{:<28}{linear_delta:e}\n", "linear composition delta");
            s += &format!("{:<28}{ratio:e}\n", "ratio (moments / linear)");
        }
    }
    s
}

/// Class probabilities for every CSV row of `input`, written as CSV rows
/// to `output`. Returns the number of rows.
pub fn cmd_predict(model: &Path, params: &Path, input: &Path, output: &Path, mode: KernelMode) -> Result<usize> {
    let spec: ModelSpec = serde_json::from_slice(&std::fs::read(model).map_err(io_err(model))?)
        .map_err(|e| CliError::Format(format!("{}: {e}", model.display())))?;
    let p = params_file::decode(&std::fs::read(params).map_err(io_err(params))?, &spec)?;
    let d = spec.input_len();
    let mut rows = 0;
    let mut values = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(input)?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != d {
            return Err(CliError::Format(format!("row {} has {} values, the model takes {d}", i + 1, rec.len())));
        }
        for f in rec.iter() {
            values.push(
                f.trim()
                    .parse::<f32>()
                    .map_err(|_| CliError::Format(format!("row {}: {f:?} is not a number", i + 1)))?,
            );
        }
        rows += 1;
    }
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(output)?;
    if rows > 0 {
        let x = Tensor::new(vec![rows, d], values)?;
        let probs = predict(&spec, &p, &x, mode)?;
        for r in 0..rows {
            writer.write_record(probs.row(r).iter().map(|v| v.to_string()))?;
        }
    }
    writer.flush().map_err(io_err(output))?;
    Ok(rows)
}

/// Serves shard `provider_id` of the configured dataset to one consumer.
/// `announce` receives the bound address before the first accept.
pub fn cmd_serve(cfg: &RunConfig, provider_id: u32, listen: &str, announce: impl FnOnce(SocketAddr)) -> Result<ProviderReport> {
    let data = cfg.load_data()?;
    let tc = cfg.train_config(&data)?;
    let shard = cfg
        .shards(&data)
        .into_iter()
        .find(|(id, _)| *id == provider_id)
        .ok_or_else(|| CliError::Config(format!("no provider {provider_id} among {}", cfg.providers.count)))?
        .1;
    let pcfg = local_provider(&tc, provider_id, tc.measurement()?);
    let listener = TcpListener::bind(listen).map_err(|e| CliError::Io(PathBuf::from(listen), e))?;
    let addr = listener.local_addr().map_err(|e| CliError::Io(PathBuf::from(listen), e))?;
    info!("provider {provider_id}: {} examples, measurement {}", shard.len(), pcfg.whitelist[0].hex());
    announce(addr);
    Ok(serve_tcp(listener, &pcfg, &shard)?)
}
