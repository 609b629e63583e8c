//! Frame layout and chunk payload packing.
//!
//! A frame is `msg_type (1) ‖ iteration (8, LE) ‖ payload_len (4, LE)`,
//! then the payload, then a 16-byte Poly1305 tag. Payloads are encrypted;
//! the header travels in clear and is authenticated as associated data.

use privml_core::data::Dataset;

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 13;
pub const TAG_LEN: usize = 16;
/// Upper bound accepted for a single payload.
pub const MAX_PAYLOAD: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    Attest = 1,
    AttestOk = 2,
    ChunkReq = 3,
    ChunkResp = 4,
    Done = 5,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            1 => MsgType::Attest,
            2 => MsgType::AttestOk,
            3 => MsgType::ChunkReq,
            4 => MsgType::ChunkResp,
            5 => MsgType::Done,
            _ => return Err(Error::Malformed(format!("unknown message type {b}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub msg_type: MsgType,
    pub iteration: u64,
    pub payload_len: u32,
}

impl Header {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0] = self.msg_type as u8;
        out[1..9].copy_from_slice(&self.iteration.to_le_bytes());
        out[9..13].copy_from_slice(&self.payload_len.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Malformed(format!("{} bytes is shorter than a header", bytes.len())));
        }
        let msg_type = MsgType::from_u8(bytes[0])?;
        let iteration = u64::from_le_bytes(bytes[1..9].try_into().expect("8 bytes"));
        let payload_len = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes"));
        if payload_len as usize > MAX_PAYLOAD {
            return Err(Error::Malformed(format!("payload length {payload_len} too large")));
        }
        Ok(Header {
            msg_type,
            iteration,
            payload_len,
        })
    }

    /// Length of the whole frame this header announces.
    pub fn frame_len(&self) -> usize {
        HEADER_LEN + self.payload_len as usize + TAG_LEN
    }
}

/// Bytes one packed example occupies.
pub fn example_bytes(dim: usize) -> usize {
    4 * dim + 4
}

/// Fixed CHUNK_RESP payload size: count plus `n` examples, rounded up to a
/// multiple of 1024.
pub fn chunk_bytes(chunk_examples: usize, dim: usize) -> usize {
    (4 + chunk_examples * example_bytes(dim)).div_ceil(1024) * 1024
}

/// Packs `idx` examples of `ds` into a zero-padded payload of `size` bytes.
pub fn pack_chunk(ds: &Dataset, idx: &[usize], size: usize) -> Result<Vec<u8>> {
    let need = 4 + idx.len() * example_bytes(ds.dim());
    if need > size {
        return Err(Error::Protocol(format!("{} examples need {need} bytes, chunk holds {size}", idx.len())));
    }
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&(idx.len() as u32).to_le_bytes());
    for &i in idx {
        let (x, y) = ds.example(i);
        for v in x {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&y.to_le_bytes());
    }
    out.resize(size, 0);
    Ok(out)
}

/// Inverse of [`pack_chunk`]. Padding must be zero.
pub fn unpack_chunk(payload: &[u8], dim: usize, classes: usize) -> Result<Dataset> {
    if payload.len() < 4 {
        return Err(Error::Malformed("chunk payload lacks a count".into()));
    }
    let n = u32::from_le_bytes(payload[..4].try_into().expect("4 bytes")) as usize;
    let eb = example_bytes(dim);
    let end = n
        .checked_mul(eb)
        .and_then(|b| b.checked_add(4))
        .filter(|&e| e <= payload.len())
        .ok_or_else(|| Error::Malformed(format!("chunk claims {n} examples but has {} bytes", payload.len())))?;
    if payload[end..].iter().any(|&b| b != 0) {
        return Err(Error::Malformed("non-zero chunk padding".into()));
    }
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for rec in payload[4..end].chunks_exact(eb) {
        let (xs, y) = rec.split_at(4 * dim);
        features.extend(xs.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))));
        labels.push(u32::from_le_bytes(y.try_into().expect("4 bytes")));
    }
    Ok(Dataset::new(dim, classes, features, labels)?)
}
