//! Consumer side: sessions to every provider and the per-iteration
//! barrier that assembles a lot.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;

use privml_core::data::Dataset;

use crate::attest::{ConsumerHandshake, Measurement};
use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::events::{Event, EventLog};
use crate::transport::{is_timeout, Transport};
use crate::wire::{chunk_bytes, unpack_chunk, MsgType};

/// Shape every chunk in a run shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkLayout {
    pub chunk_examples: usize,
    pub dim: usize,
    pub classes: usize,
}

impl ChunkLayout {
    pub fn chunk_bytes(&self) -> usize {
        chunk_bytes(self.chunk_examples, self.dim)
    }
}

/// The consumer's end of one provider session.
pub struct ConsumerSession {
    pub provider_id: u32,
    channel: Channel,
    transport: Box<dyn Transport>,
    next_iteration: u64,
    layout: ChunkLayout,
}

impl std::fmt::Debug for ConsumerSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConsumerSession")
            .field("provider_id", &self.provider_id)
            .field("next_iteration", &self.next_iteration)
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

fn timeout_err(provider: u32, t: Duration, e: Error) -> Error {
    if is_timeout(&e) {
        Error::Timeout {
            provider,
            seconds: t.as_secs_f64(),
        }
    } else {
        e
    }
}

impl ConsumerSession {
    /// Runs the handshake over `transport`.
    pub fn connect(
        provider_id: u32,
        mut transport: Box<dyn Transport>,
        measurement: Measurement,
        secret: [u8; 32],
        layout: ChunkLayout,
        timeout: Duration,
    ) -> Result<Self> {
        let hs = ConsumerHandshake::new(measurement, secret);
        transport.send(&hs.attest_frame())?;
        let reply = transport
            .recv(Some(timeout))
            .map_err(|e| timeout_err(provider_id, timeout, e))?;
        let channel = hs.finish(&reply)?;
        Ok(ConsumerSession {
            provider_id,
            channel,
            transport,
            next_iteration: 1,
            layout,
        })
    }

    pub fn next_iteration(&self) -> u64 {
        self.next_iteration
    }

    pub fn layout(&self) -> ChunkLayout {
        self.layout
    }

    /// Requests and receives the chunk for `iteration`.
    pub fn fetch(&mut self, iteration: u64, timeout: Duration) -> Result<Dataset> {
        if iteration != self.next_iteration {
            return Err(Error::Protocol(format!(
                "iteration {iteration} requested, session expects {}",
                self.next_iteration
            )));
        }
        let req = self.channel.seal(MsgType::ChunkReq, iteration, &[]);
        self.transport.send(&req)?;
        let frame = self
            .transport
            .recv(Some(timeout))
            .map_err(|e| timeout_err(self.provider_id, timeout, e))?;
        let msg = self.channel.open(&frame)?;
        if msg.msg_type != MsgType::ChunkResp || msg.iteration != iteration {
            return Err(Error::Protocol(format!(
                "provider {} answered {:?} for iteration {} to CHUNK_REQ {iteration}",
                self.provider_id, msg.msg_type, msg.iteration
            )));
        }
        if msg.payload.len() != self.layout.chunk_bytes() {
            return Err(Error::Protocol(format!(
                "chunk of {} bytes, expected {}",
                msg.payload.len(),
                self.layout.chunk_bytes()
            )));
        }
        let chunk = unpack_chunk(&msg.payload, self.layout.dim, self.layout.classes)?;
        if chunk.len() != self.layout.chunk_examples {
            return Err(Error::Protocol(format!(
                "provider {} sent {} examples, expected {}",
                self.provider_id,
                chunk.len(),
                self.layout.chunk_examples
            )));
        }
        self.next_iteration += 1;
        Ok(chunk)
    }

    /// Tells the provider the run is over.
    pub fn close(mut self) -> Result<()> {
        let f = self.channel.seal(MsgType::Done, self.next_iteration, &[]);
        self.transport.send(&f)
    }
}

/// Sorts sessions by provider id and checks they agree on the layout.
pub fn order_sessions(sessions: &mut [ConsumerSession]) -> Result<()> {
    sessions.sort_by_key(|s| s.provider_id);
    if sessions.is_empty() {
        return Err(Error::Config("no provider sessions".into()));
    }
    if sessions.windows(2).any(|w| w[0].provider_id == w[1].provider_id) {
        return Err(Error::Config("duplicate provider id".into()));
    }
    if sessions.iter().any(|s| s.layout != sessions[0].layout) {
        return Err(Error::Config("providers disagree on chunk layout".into()));
    }
    Ok(())
}

/// Requests `iteration` from every provider at once and waits for all of
/// them. Chunks are joined in provider-id order and then shuffled with
/// `rng`. Any failure, including a timeout, aborts the round.
pub fn consumer_fetch_round<G: Rng + ?Sized>(
    sessions: &mut [ConsumerSession],
    iteration: u64,
    timeout: Duration,
    rng: &mut G,
    events: &EventLog,
) -> Result<Dataset> {
    order_sessions(sessions)?;
    let results: Vec<Result<Dataset>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sessions
            .iter_mut()
            .map(|s| {
                scope.spawn(move || {
                    let chunk = s.fetch(iteration, timeout)?;
                    events.push(Event::ChunkReceived {
                        provider: s.provider_id,
                        iteration,
                    });
                    Ok(chunk)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("fetch thread panicked".into()))))
            .collect()
    });
    let mut chunks = results.into_iter();
    let mut lot = chunks.next().expect("at least one session")?;
    for c in chunks {
        lot.extend(&c?)?;
    }
    let mut order: Vec<usize> = (0..lot.len()).collect();
    order.shuffle(rng);
    let lot = lot.subset(&order);
    events.push(Event::RoundComplete {
        iteration,
        lot_size: lot.len(),
    });
    Ok(lot)
}
