//! Seeded, counter-based random streams.
//!
//! All randomness flows from ChaCha20 generators keyed by a run seed. A
//! stream id selects an independent substream, so work can be assigned to
//! streams by logical index (provider, example, purpose) rather than by
//! thread, keeping runs reproducible for any worker count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Generator for `(seed, stream)`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Well-known stream ids used by the training stack.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SCRUB: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const SAMPLING: u64 = 5;
    pub const DATA: u64 = 6;
    pub const HANDSHAKE: u64 = 7;
    /// Provider `i` uses `PROVIDER_BASE + i`.
    pub const PROVIDER_BASE: u64 = 1 << 32;
}

/// Wraps a generator and counts 32- and 64-bit words drawn from it.
#[derive(Debug, Clone)]
pub struct CountingRng<R> {
    inner: R,
    words: u64,
}

impl<R> CountingRng<R> {
    pub fn new(inner: R) -> Self {
        CountingRng { inner, words: 0 }
    }

    pub fn words(&self) -> u64 {
        self.words
    }

    pub fn into_inner(self) -> R {
        self.inner
    }
}

impl<R: RngCore> RngCore for CountingRng<R> {
    fn next_u32(&mut self) -> u32 {
        self.words += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.words += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.words += dst.len().div_ceil(4) as u64;
        self.inner.fill_bytes(dst)
    }
}
