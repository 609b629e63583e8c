//! Mock attestation: a measurement whitelist plus ephemeral X25519 key
//! agreement.
//!
//! The consumer opens with `ATTEST = measurement ‖ consumer_pub`, tagged
//! under a key derived from the measurement. A provider that whitelists the
//! measurement answers `ATTEST_OK = provider_pub`, tagged under the new
//! session key, which is derived from the shared secret with the
//! measurement as salt and both public keys as context. Anything else gets
//! a `DONE` and no data.

use hkdf::Hkdf;
use serde::Serialize;
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use privml_core::nn::ModelSpec;

use crate::channel::{open_clear, seal_clear, split_frame, Channel, Role};
use crate::error::{Error, Result};
use crate::wire::MsgType;

pub const CODE_VERSION: &str = concat!("privml/", env!("CARGO_PKG_VERSION"));

/// Digest of the training program a consumer claims to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Measurement(pub [u8; 32]);

impl Measurement {
    /// SHA-256 over the JSON encoding of `(code_version, spec, settings)`.
    pub fn compute<S: Serialize>(spec: &ModelSpec, settings: &S, code_version: &str) -> Result<Self> {
        let bytes = serde_json::to_vec(&(code_version, spec, settings))
            .map_err(|e| Error::Config(format!("cannot encode measurement input: {e}")))?;
        Ok(Measurement(Sha256::digest(&bytes).into()))
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn attest_key(&self) -> [u8; 32] {
        let hk = Hkdf::<Sha256>::new(Some(b"privml attest"), &self.0);
        let mut k = [0u8; 32];
        hk.expand(b"attest tag", &mut k).expect("32 bytes is a valid length");
        k
    }
}

fn session_key(shared: &[u8; 32], m: &Measurement, consumer: &PublicKey, provider: &PublicKey) -> [u8; 32] {
    let hk = Hkdf::<Sha256>::new(Some(&m.0), shared);
    let mut info = b"privml session".to_vec();
    info.extend_from_slice(consumer.as_bytes());
    info.extend_from_slice(provider.as_bytes());
    let mut k = [0u8; 32];
    hk.expand(&info, &mut k).expect("32 bytes is a valid length");
    k
}

fn agree(secret: &StaticSecret, peer: &PublicKey) -> Result<[u8; 32]> {
    let shared = secret.diffie_hellman(peer);
    if !shared.was_contributory() {
        return Err(Error::Protocol("low-order public key".into()));
    }
    Ok(*shared.as_bytes())
}

/// Consumer half of the handshake.
pub struct ConsumerHandshake {
    measurement: Measurement,
    secret: StaticSecret,
    public: PublicKey,
}

impl ConsumerHandshake {
    /// `secret` is the ephemeral X25519 scalar; callers draw it fresh per
    /// session.
    pub fn new(measurement: Measurement, secret: [u8; 32]) -> Self {
        let secret = StaticSecret::from(secret);
        let public = PublicKey::from(&secret);
        ConsumerHandshake {
            measurement,
            secret,
            public,
        }
    }

    pub fn attest_frame(&self) -> Vec<u8> {
        let mut payload = self.measurement.0.to_vec();
        payload.extend_from_slice(self.public.as_bytes());
        seal_clear(&self.measurement.attest_key(), Role::Consumer, 0, MsgType::Attest, 0, &payload)
    }

    /// Checks the provider's reply and returns the consumer's channel.
    pub fn finish(self, reply: &[u8]) -> Result<Channel> {
        let (header, body, _) = split_frame(reply)?;
        match header.msg_type {
            MsgType::AttestOk if body.len() == 32 => {}
            MsgType::Done => return Err(Error::Rejected(self.measurement.hex())),
            t => return Err(Error::Protocol(format!("expected ATTEST_OK, got {t:?}"))),
        }
        let provider = PublicKey::from(<[u8; 32]>::try_from(body).expect("length checked"));
        let key = session_key(&agree(&self.secret, &provider)?, &self.measurement, &self.public, &provider);
        let msg = open_clear(&key, Role::Provider, 0, reply)?;
        if msg.iteration != 0 {
            return Err(Error::Protocol("ATTEST_OK must carry iteration 0".into()));
        }
        Ok(Channel::new(key, Role::Consumer, 0, 1))
    }
}

/// Why a provider refused a session, and the `DONE` frame to send back
/// when the request was well-formed enough to answer.
#[derive(Debug)]
pub struct Refusal {
    pub error: Error,
    pub reply: Option<Vec<u8>>,
}

/// Provider half: verifies an `ATTEST` frame against `whitelist`.
pub fn provider_accept(whitelist: &[Measurement], frame: &[u8], secret: [u8; 32]) -> Result<(Channel, Vec<u8>), Refusal> {
    let refuse = |error, reply| Refusal { error, reply };
    if whitelist.is_empty() {
        return Err(refuse(Error::Config("provider whitelist is empty".into()), None));
    }
    let (header, body, _) = split_frame(frame).map_err(|e| refuse(e, None))?;
    if header.msg_type != MsgType::Attest || header.iteration != 0 || body.len() != 64 {
        return Err(refuse(Error::Protocol(format!("malformed ATTEST ({:?}, {} bytes)", header.msg_type, body.len())), None));
    }
    let measurement = Measurement(body[..32].try_into().expect("length checked"));
    let done = seal_clear(&measurement.attest_key(), Role::Provider, 0, MsgType::Done, 0, &[]);
    if !whitelist.contains(&measurement) {
        return Err(refuse(Error::Rejected(measurement.hex()), Some(done)));
    }
    if let Err(e) = open_clear(&measurement.attest_key(), Role::Consumer, 0, frame) {
        return Err(refuse(e, Some(done)));
    }
    let consumer = PublicKey::from(<[u8; 32]>::try_from(&body[32..]).expect("length checked"));
    let secret = StaticSecret::from(secret);
    let public = PublicKey::from(&secret);
    let shared = agree(&secret, &consumer).map_err(|e| refuse(e, Some(done.clone())))?;
    let key = session_key(&shared, &measurement, &consumer, &public);
    let reply = seal_clear(&key, Role::Provider, 0, MsgType::AttestOk, 0, public.as_bytes());
    Ok((Channel::new(key, Role::Provider, 1, 0), reply))
}
