//! Data provider: answers one consumer session with fixed-size chunks.

use log::{info, warn};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use privml_core::data::Dataset;
use privml_core::rng::{seeded, streams};

use crate::attest::{provider_accept, Measurement};
use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::transport::Transport;
use crate::wire::{chunk_bytes, pack_chunk, MsgType};

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub id: u32,
    pub whitelist: Vec<Measurement>,
    pub chunk_examples: usize,
    /// Seeds the provider's shard permutations.
    pub seed: u64,
}

/// Endless stream of shard indices: one random permutation per epoch,
/// reshuffled each time the previous one is used up.
#[derive(Debug, Clone)]
pub struct ChunkSource {
    len: usize,
    perm: Vec<usize>,
    pos: usize,
    epochs: u64,
    rng: ChaCha20Rng,
}

impl ChunkSource {
    pub fn new(len: usize, seed: u64, provider: u32) -> Result<Self> {
        if len == 0 {
            return Err(Error::Config(format!("provider {provider} has an empty shard")));
        }
        Ok(ChunkSource {
            len,
            perm: Vec::new(),
            pos: 0,
            epochs: 0,
            rng: seeded(seed, streams::PROVIDER_BASE + provider as u64),
        })
    }

    pub fn next_chunk(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.perm.len() {
                self.perm = (0..self.len).collect();
                self.perm.shuffle(&mut self.rng);
                self.pos = 0;
                self.epochs += 1;
            }
            let take = (n - out.len()).min(self.perm.len() - self.pos);
            out.extend_from_slice(&self.perm[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }

    /// Permutations started so far.
    pub fn epochs(&self) -> u64 {
        self.epochs
    }
}

/// What the provider does with an incoming frame.
#[derive(Debug)]
pub enum Step {
    Respond(Vec<u8>),
    Finished,
    /// Send `reply` if present, then drop the session.
    Abort { reply: Option<Vec<u8>>, error: Error },
}

/// Provider state after a successful handshake.
#[derive(Debug)]
pub struct ProviderSession {
    pub provider_id: u32,
    channel: Channel,
    next_iteration: u64,
    chunk_examples: usize,
    chunk_bytes: usize,
    source: ChunkSource,
    served: u64,
}

impl ProviderSession {
    pub fn new(cfg: &ProviderConfig, channel: Channel, shard: &Dataset) -> Result<Self> {
        if cfg.chunk_examples == 0 {
            return Err(Error::Config("chunk_examples must be positive".into()));
        }
        Ok(ProviderSession {
            provider_id: cfg.id,
            channel,
            next_iteration: 1,
            chunk_examples: cfg.chunk_examples,
            chunk_bytes: chunk_bytes(cfg.chunk_examples, shard.dim()),
            source: ChunkSource::new(shard.len(), cfg.seed, cfg.id)?,
            served: 0,
        })
    }

    pub fn next_iteration(&self) -> u64 {
        self.next_iteration
    }

    pub fn served(&self) -> u64 {
        self.served
    }

    pub fn handle(&mut self, shard: &Dataset, frame: &[u8]) -> Step {
        let msg = match self.channel.open(frame) {
            Ok(m) => m,
            Err(error) => return Step::Abort { reply: None, error },
        };
        match msg.msg_type {
            MsgType::ChunkReq if msg.iteration == self.next_iteration && msg.payload.is_empty() => {
                let idx = self.source.next_chunk(self.chunk_examples);
                let payload = match pack_chunk(shard, &idx, self.chunk_bytes) {
                    Ok(p) => p,
                    Err(error) => return Step::Abort { reply: None, error },
                };
                self.next_iteration += 1;
                self.served += 1;
                Step::Respond(self.channel.seal(MsgType::ChunkResp, msg.iteration, &payload))
            }
            MsgType::Done => Step::Finished,
            t => {
                let error = Error::Protocol(format!(
                    "unexpected {t:?} for iteration {} (expected CHUNK_REQ {})",
                    msg.iteration, self.next_iteration
                ));
                let reply = self.channel.seal(MsgType::Done, msg.iteration, &[]);
                Step::Abort { reply: Some(reply), error }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderOutcome {
    /// The consumer closed the session with `DONE`.
    Finished,
    Refused(String),
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReport {
    pub id: u32,
    pub chunks_served: u64,
    pub outcome: ProviderOutcome,
}

/// Runs one session to completion on `transport`. `secret` is the
/// provider's ephemeral key-agreement scalar.
pub fn provider_serve<T: Transport + ?Sized>(
    cfg: &ProviderConfig,
    shard: &Dataset,
    transport: &mut T,
    secret: [u8; 32],
) -> ProviderReport {
    let report = |chunks_served, outcome| ProviderReport {
        id: cfg.id,
        chunks_served,
        outcome,
    };
    let hello = match transport.recv(None) {
        Ok(f) => f,
        Err(e) => return report(0, ProviderOutcome::Aborted(e.to_string())),
    };
    let (channel, reply) = match provider_accept(&cfg.whitelist, &hello, secret) {
        Ok(ok) => ok,
        Err(refusal) => {
            warn!("provider {} refused session: {}", cfg.id, refusal.error);
            if let Some(done) = refusal.reply {
                let _ = transport.send(&done);
            }
            return report(0, ProviderOutcome::Refused(refusal.error.to_string()));
        }
    };
    let mut session = match ProviderSession::new(cfg, channel, shard) {
        Ok(s) => s,
        Err(e) => return report(0, ProviderOutcome::Aborted(e.to_string())),
    };
    if let Err(e) = transport.send(&reply) {
        return report(0, ProviderOutcome::Aborted(e.to_string()));
    }
    loop {
        let frame = match transport.recv(None) {
            Ok(f) => f,
            Err(e) => return report(session.served, ProviderOutcome::Aborted(e.to_string())),
        };
        match session.handle(shard, &frame) {
            Step::Respond(f) => {
                if let Err(e) = transport.send(&f) {
                    return report(session.served, ProviderOutcome::Aborted(e.to_string()));
                }
            }
            Step::Finished => {
                info!("provider {} finished after {} chunks", cfg.id, session.served);
                return report(session.served, ProviderOutcome::Finished);
            }
            Step::Abort { reply, error } => {
                warn!("provider {} aborting: {error}", cfg.id);
                if let Some(f) = reply {
                    let _ = transport.send(&f);
                }
                return report(session.served, ProviderOutcome::Aborted(error.to_string()));
            }
        }
    }
}
