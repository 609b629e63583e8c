//! Binary parameter files.
//!
//! ```text
//! spec digest (32) ‖ tensor count (u32)
//! per tensor: name length (u32) ‖ name ‖ rank (u32) ‖ dims (u64 each) ‖ f32 data
//! ```
//!
//! All integers and floats are little-endian.

use sha2::{Digest, Sha256};

use privml_core::nn::{ModelSpec, ParamSet};
use privml_core::Tensor;

use crate::error::{CliError, Result};

pub fn spec_digest(spec: &ModelSpec) -> [u8; 32] {
    let json = serde_json::to_vec(spec).expect("model spec is always serializable");
    Sha256::digest(&json).into()
}

pub fn encode(spec: &ModelSpec, params: &ParamSet<f32>) -> Vec<u8> {
    let mut out = spec_digest(spec).to_vec();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(CliError::Format("parameter file is truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a parameter file and checks it against `spec`.
pub fn decode(bytes: &[u8], spec: &ModelSpec) -> Result<ParamSet<f32>> {
    let mut r = Reader { buf: bytes };
    if r.take(32)? != spec_digest(spec) {
        return Err(CliError::Format("parameter file was written for a different model".into()));
    }
    let count = r.u32()?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CliError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= r.buf.len()))
            .ok_or_else(|| CliError::Format(format!("tensor {name} has impossible shape {shape:?}")))?;
        let data = r
            .take(4 * n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        entries.push((name, Tensor::new(shape, data)?));
    }
    if !r.buf.is_empty() {
        return Err(CliError::Format(format!("{} trailing bytes in parameter file", r.buf.len())));
    }
    let params = ParamSet::new(entries)?;
    params.check_against(spec)?;
    Ok(params)
}
