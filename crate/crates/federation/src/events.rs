use std::sync::{Arc, Mutex};

/// Consumer-side progress events, in the order they happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    ChunkReceived { provider: u32, iteration: u64 },
    RoundComplete { iteration: u64, lot_size: usize },
    /// Parameters were updated for `iteration`.
    Update { iteration: u64, private: bool },
    EpochEnd { epoch: usize },
}

#[derive(Debug, Clone, Default)]
pub struct EventLog(Arc<Mutex<Vec<Event>>>);

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, e: Event) {
        self.0.lock().expect("event log poisoned").push(e);
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.0.lock().expect("event log poisoned").clone()
    }
}
