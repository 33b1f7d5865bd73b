//! Binary feature files.
//!
//! Layout, little-endian: magic `LMEL`, then `u32` version, channels, frames and mels, then
//! `channels · frames · mels` `f32` values in channel, frame, mel order.

use std::fs;
use std::path::Path;

use super::LogMel;
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"LMEL";
const VERSION: u32 = 1;
const HEADER: usize = 20;

pub fn encode_features(m: &LogMel) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * m.data.len());
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, m.channels as u32, m.frames as u32, m.mels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<LogMel> {
    if bytes.len() < HEADER {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            let found = [bytes[0], bytes[1], bytes[2], bytes[3]];
            return Err(Error::MagicMismatch {
                expected: MAGIC,
                found,
            });
        }
        return Err(Error::Truncated(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    let found = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if found != MAGIC {
        return Err(Error::MagicMismatch {
            expected: MAGIC,
            found,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported feature file version {version}"
        )));
    }
    let (channels, frames, mels) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let n = channels
        .checked_mul(frames)
        .and_then(|v| v.checked_mul(mels))
        .ok_or_else(|| Error::Truncated("declared shape overflows".into()))?;
    let payload = &bytes[HEADER..];
    if payload.len() < 4 * n {
        return Err(Error::Truncated(format!(
            "header declares {} payload bytes, file has {}",
            4 * n,
            payload.len()
        )));
    }
    let data = payload[..4 * n]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    LogMel::new(channels, frames, mels, data)
}

pub fn write_features(path: impl AsRef<Path>, m: &LogMel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(m)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<LogMel> {
    let path = path.as_ref();
    decode_features(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
