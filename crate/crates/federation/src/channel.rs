//! Authenticated encryption of frames under a session key.

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};

use crate::error::{Error, Result};
use crate::wire::{Header, MsgType, HEADER_LEN, TAG_LEN};

/// Which side of a session a party plays. It picks the nonce prefix, so
/// the two directions never share a nonce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Consumer,
    Provider,
}

impl Role {
    fn byte(self) -> u8 {
        match self {
            Role::Consumer => 0,
            Role::Provider => 1,
        }
    }

    pub fn peer(self) -> Role {
        match self {
            Role::Consumer => Role::Provider,
            Role::Provider => Role::Consumer,
        }
    }
}

pub(crate) fn nonce(sender: Role, counter: u64) -> Nonce {
    let mut n = [0u8; 12];
    n[0] = sender.byte();
    n[4..].copy_from_slice(&counter.to_le_bytes());
    Nonce::from(n)
}

/// A decrypted, authenticated message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub msg_type: MsgType,
    pub iteration: u64,
    pub payload: Vec<u8>,
}

/// Builds a frame whose payload stays in clear; the tag still covers
/// header and payload.
pub(crate) fn seal_clear(key: &[u8; 32], sender: Role, counter: u64, ty: MsgType, iteration: u64, payload: &[u8]) -> Vec<u8> {
    let header = Header {
        msg_type: ty,
        iteration,
        payload_len: payload.len() as u32,
    }
    .encode();
    let mut aad = header.to_vec();
    aad.extend_from_slice(payload);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    let tag = cipher
        .encrypt_in_place_detached(&nonce(sender, counter), &aad, &mut [])
        .expect("empty plaintext cannot overflow");
    aad.extend_from_slice(&tag);
    aad
}

/// Splits a frame and checks its length against the header.
pub(crate) fn split_frame(frame: &[u8]) -> Result<(Header, &[u8], &[u8])> {
    let header = Header::decode(frame)?;
    if frame.len() != header.frame_len() {
        return Err(Error::Malformed(format!(
            "frame is {} bytes, header announces {}",
            frame.len(),
            header.frame_len()
        )));
    }
    let body = &frame[HEADER_LEN..frame.len() - TAG_LEN];
    Ok((header, body, &frame[frame.len() - TAG_LEN..]))
}

/// Verifies a clear-payload frame produced by [`seal_clear`].
pub(crate) fn open_clear(key: &[u8; 32], sender: Role, counter: u64, frame: &[u8]) -> Result<Message> {
    let (header, body, tag) = split_frame(frame)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    cipher
        .decrypt_in_place_detached(&nonce(sender, counter), &frame[..frame.len() - TAG_LEN], &mut [], Tag::from_slice(tag))
        .map_err(|_| Error::BadTag)?;
    Ok(Message {
        msg_type: header.msg_type,
        iteration: header.iteration,
        payload: body.to_vec(),
    })
}

/// One side of an established session. Each direction numbers its
/// messages from zero; a frame is only accepted under the next expected
/// counter, so replays and reordering fail authentication.
pub struct Channel {
    key: [u8; 32],
    cipher: ChaCha20Poly1305,
    role: Role,
    sent: u64,
    received: u64,
}

impl std::fmt::Debug for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Channel")
            .field("role", &self.role)
            .field("sent", &self.sent)
            .field("received", &self.received)
            .finish_non_exhaustive()
    }
}

impl Channel {
    pub(crate) fn new(key: [u8; 32], role: Role, sent: u64, received: u64) -> Self {
        Channel {
            cipher: ChaCha20Poly1305::new(Key::from_slice(&key)),
            key,
            role,
            sent,
            received,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// The raw session key. Exposed so tests can compare both ends.
    pub fn session_key(&self) -> &[u8; 32] {
        &self.key
    }

    pub fn seal(&mut self, ty: MsgType, iteration: u64, payload: &[u8]) -> Vec<u8> {
        let header = Header {
            msg_type: ty,
            iteration,
            payload_len: payload.len() as u32,
        }
        .encode();
        let mut frame = Vec::with_capacity(HEADER_LEN + payload.len() + TAG_LEN);
        frame.extend_from_slice(&header);
        frame.extend_from_slice(payload);
        let tag = self
            .cipher
            .encrypt_in_place_detached(&nonce(self.role, self.sent), &header, &mut frame[HEADER_LEN..])
            .expect("payload within AEAD limits");
        frame.extend_from_slice(&tag);
        self.sent += 1;
        frame
    }

    pub fn open(&mut self, frame: &[u8]) -> Result<Message> {
        let (header, _, tag) = split_frame(frame)?;
        let tag = *Tag::from_slice(tag);
        let mut payload = frame[HEADER_LEN..frame.len() - TAG_LEN].to_vec();
        self.cipher
            .decrypt_in_place_detached(&nonce(self.role.peer(), self.received), &frame[..HEADER_LEN], &mut payload, &tag)
            .map_err(|_| Error::BadTag)?;
        self.received += 1;
        Ok(Message {
            msg_type: header.msg_type,
            iteration: header.iteration,
            payload,
        })
    }
}
