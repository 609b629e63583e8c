//! Runs a whole federation in one process: provider threads plus the
//! consumer's training loop.

use std::net::{TcpListener, TcpStream};
use std::thread::JoinHandle;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use privml_core::data::Dataset;

use crate::attest::Measurement;
use crate::consumer::{ChunkLayout, ConsumerSession};
use crate::error::{Error, Result};
use crate::events::EventLog;
use crate::provider::{provider_serve, ProviderConfig, ProviderOutcome, ProviderReport};
use crate::train::{train_loop, EpochMetrics, TrainConfig, TrainOutcome};
use crate::transport::{loopback_pair, Capture, Tcp, Transport, WireLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Loopback,
    Tcp,
}

/// A fresh ephemeral key-agreement scalar from the operating system.
pub fn fresh_secret() -> [u8; 32] {
    let mut s = [0u8; 32];
    rand::rng().fill_bytes(&mut s);
    s
}

/// Starts a provider thread serving `shard` on `transport`.
pub fn spawn_provider<T: Transport + 'static>(cfg: ProviderConfig, shard: Dataset, mut transport: T) -> JoinHandle<ProviderReport> {
    std::thread::spawn(move || provider_serve(&cfg, &shard, &mut transport, fresh_secret()))
}

/// Serves a single consumer session on the first connection to `listener`.
pub fn serve_tcp(listener: TcpListener, cfg: &ProviderConfig, shard: &Dataset) -> Result<ProviderReport> {
    let (stream, peer) = listener.accept()?;
    log::info!("provider {} accepted {peer}", cfg.id);
    let mut t = Tcp::new(stream)?;
    Ok(provider_serve(cfg, shard, &mut t, fresh_secret()))
}

/// Provider config for shard `id` of a local run.
pub fn local_provider(cfg: &TrainConfig, id: u32, measurement: Measurement) -> ProviderConfig {
    ProviderConfig {
        id,
        whitelist: vec![measurement],
        chunk_examples: cfg.chunk_examples,
        seed: cfg.seed,
    }
}

/// Extra knobs for [`run_local`].
#[derive(Debug, Clone, Default)]
pub struct LocalOptions {
    pub transport: TransportKind,
    /// Captures the consumer's traffic when set.
    pub wire_log: Option<WireLog>,
    pub events: EventLog,
}

#[derive(Debug)]
pub struct LocalRun {
    pub outcome: TrainOutcome,
    pub providers: Vec<ProviderReport>,
}

/// Connects the consumer to providers and returns sessions in the order of
/// `links`.
pub fn connect_all(
    cfg: &TrainConfig,
    links: Vec<(u32, Box<dyn Transport>)>,
    layout: ChunkLayout,
    wire_log: Option<&WireLog>,
) -> Result<Vec<ConsumerSession>> {
    let measurement = cfg.measurement()?;
    links
        .into_iter()
        .map(|(id, t)| {
            let t: Box<dyn Transport> = match wire_log {
                Some(log) => Box::new(Capture::new(t, id, log.clone())),
                None => t,
            };
            ConsumerSession::connect(id, t, measurement, fresh_secret(), layout, cfg.timeout())
        })
        .collect()
}

/// Closes every session, then collects provider reports.
fn finish(sessions: Vec<ConsumerSession>, handles: Vec<JoinHandle<ProviderReport>>) -> Vec<ProviderReport> {
    for s in sessions {
        let _ = s.close();
    }
    handles
        .into_iter()
        .map(|h| h.join().expect("provider thread panicked"))
        .collect()
}

/// Trains over `shards`, one provider thread per `(id, shard)`.
pub fn run_local(
    cfg: &TrainConfig,
    shards: Vec<(u32, Dataset)>,
    test: &Dataset,
    opts: &LocalOptions,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<LocalRun> {
    let first = shards.first().ok_or_else(|| Error::Config("no providers".into()))?;
    let layout = ChunkLayout {
        chunk_examples: cfg.chunk_examples,
        dim: first.1.dim(),
        classes: first.1.classes(),
    };
    let total: usize = shards.iter().map(|(_, s)| s.len()).sum();
    if total != cfg.dataset_size {
        return Err(Error::Config(format!(
            "shards hold {total} examples, config says {}",
            cfg.dataset_size
        )));
    }
    let measurement = cfg.measurement()?;
    let mut handles = Vec::new();
    let mut links: Vec<(u32, Box<dyn Transport>)> = Vec::new();
    for (id, shard) in shards {
        let pcfg = local_provider(cfg, id, measurement);
        match opts.transport {
            TransportKind::Loopback => {
                let (c, p) = loopback_pair();
                handles.push(spawn_provider(pcfg, shard, p));
                links.push((id, Box::new(c)));
            }
            TransportKind::Tcp => {
                let listener = TcpListener::bind("127.0.0.1:0")?;
                let addr = listener.local_addr()?;
                handles.push(std::thread::spawn(move || match listener.accept().map_err(Error::from).and_then(|(s, _)| Tcp::new(s)) {
                    Ok(mut t) => provider_serve(&pcfg, &shard, &mut t, fresh_secret()),
                    Err(e) => ProviderReport {
                        id: pcfg.id,
                        chunks_served: 0,
                        outcome: ProviderOutcome::Aborted(e.to_string()),
                    },
                }));
                links.push((id, Box::new(Tcp::new(TcpStream::connect(addr)?)?)));
            }
        }
    }
    let mut sessions = match connect_all(cfg, links, layout, opts.wire_log.as_ref()) {
        Ok(s) => s,
        Err(e) => {
            // Dropping the links unblocks the provider threads.
            for h in handles {
                let _ = h.join();
            }
            return Err(e);
        }
    };
    let result = train_loop(cfg, &mut sessions, test, &opts.events, on_epoch);
    let providers = finish(sessions, handles);
    Ok(LocalRun {
        outcome: result?,
        providers,
    })
}

/// Connects to providers already serving over TCP and trains.
pub fn run_remote(
    cfg: &TrainConfig,
    addresses: &[(u32, String)],
    layout: ChunkLayout,
    test: &Dataset,
    events: &EventLog,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let links = addresses
        .iter()
        .map(|(id, a)| Ok((*id, Box::new(Tcp::new(TcpStream::connect(a.as_str())?)?) as Box<dyn Transport>)))
        .collect::<Result<Vec<_>>>()?;
    let mut sessions = connect_all(cfg, links, layout, None)?;
    let result = train_loop(cfg, &mut sessions, test, events, on_epoch);
    for s in sessions {
        let _ = s.close();
    }
    result
}
