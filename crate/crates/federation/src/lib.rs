//! Multi-provider training protocol.
//!
//! Data providers hold shards and hand out fixed-size encrypted chunks to a
//! consumer that has passed a (mock) attestation check. The consumer blocks
//! on every provider each iteration, joins the chunks into one lot and runs
//! a private update on it. Every chunk response in a run has the same byte
//! length, so traffic shape carries no information about the data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attest;
pub mod channel;
pub mod consumer;
pub mod error;
pub mod events;
pub mod local;
pub mod provider;
pub mod train;
pub mod transport;
pub mod wire;

pub use attest::{provider_accept, ConsumerHandshake, Measurement, CODE_VERSION};
pub use channel::{Channel, Message, Role};
pub use consumer::{consumer_fetch_round, ChunkLayout, ConsumerSession};
pub use error::{Error, Result};
pub use events::{Event, EventLog};
pub use local::{run_local, run_remote, serve_tcp, spawn_provider, LocalOptions, LocalRun, TransportKind};
pub use provider::{provider_serve, ChunkSource, ProviderConfig, ProviderOutcome, ProviderReport, ProviderSession, Step};
pub use train::{evaluate, train_loop, EpochMetrics, TrainConfig, TrainOutcome, TrainPlan, TrainStatus};
pub use transport::{loopback_pair, Capture, Direction, Loopback, Tcp, Transport, WireLog, WireRecord};
pub use wire::{chunk_bytes, Header, MsgType};
