//! RIFF/WAVE reading and 16-bit PCM writing.
//!
//! Reads 16-bit integer PCM and 32-bit IEEE float, including the `WAVE_FORMAT_EXTENSIBLE`
//! wrapper. Unknown chunks are skipped; chunk payloads are word-aligned.

use std::fs;
use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Header facts of a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub format: SampleFormat,
    pub channels: u16,
    pub sample_rate: u32,
    /// Samples per channel.
    pub frames: usize,
    data_offset: usize,
}

impl WavInfo {
    pub fn duration_seconds(&self) -> f64 {
        self.frames as f64 / self.sample_rate as f64
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::WavFormat(msg.into())
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses the header of an in-memory WAV file. `bytes` may stop anywhere after the `data`
/// chunk header.
fn parse_header(bytes: &[u8], total_len: usize) -> Result<WavInfo> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut fmt: Option<(SampleFormat, u16, u32, u16)> = None;
    loop {
        if pos + 8 > bytes.len() {
            return Err(bad("no data chunk"));
        }
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if id == b"data" {
            let (format, channels, sample_rate, block_align) =
                fmt.ok_or_else(|| bad("data chunk before fmt chunk"))?;
            if body + size > total_len {
                return Err(bad(format!(
                    "data chunk declares {size} bytes but only {} remain",
                    total_len - body
                )));
            }
            return Ok(WavInfo {
                format,
                channels,
                sample_rate,
                frames: size / block_align as usize,
                data_offset: body,
            });
        }
        if body + size > bytes.len() {
            return Err(bad("truncated chunk"));
        }
        if id == b"fmt " {
            fmt = Some(parse_fmt(&bytes[body..body + size])?);
        }
        pos = body + size + (size & 1);
    }
}

fn parse_fmt(b: &[u8]) -> Result<(SampleFormat, u16, u32, u16)> {
    if b.len() < 16 {
        return Err(bad("fmt chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(b, 0);
    let channels = u16_at(b, 2);
    let sample_rate = u32_at(b, 4);
    let block_align = u16_at(b, 12);
    let bits = u16_at(b, 14);
    if tag == FORMAT_EXTENSIBLE {
        if b.len() < 40 {
            return Err(bad("extensible fmt chunk shorter than 40 bytes"));
        }
        // The sub-format GUID begins with the plain format tag.
        tag = u16_at(b, 24);
    }
    if channels == 0 || sample_rate == 0 {
        return Err(bad("zero channels or sample rate"));
    }
    let format = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        (tag, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "format tag {tag:#06x} with {bits} bits"
            )))
        }
    };
    let width = bits as usize / 8;
    if block_align as usize != width * channels as usize {
        return Err(bad(format!(
            "block align {block_align} does not match {channels}×{bits} bits"
        )));
    }
    Ok((format, channels, sample_rate, block_align))
}

/// Reads only as much of the file as needed to learn its format and length.
pub fn read_wav_info(path: impl AsRef<Path>) -> Result<WavInfo> {
    use std::io::Read;
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let total = file.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
    let mut head = Vec::new();
    file.take(1 << 16)
        .read_to_end(&mut head)
        .map_err(|e| Error::io(path, e))?;
    match parse_header(&head, total) {
        // Large leading chunks; fall back to the whole file.
        Err(Error::WavFormat(_)) if head.len() < total => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_header(&bytes, bytes.len())
        }
        r => r,
    }
}

/// Decodes PCM16 (scaled by 1/32768) or float32 (clamped to `[-1, 1]`) into per-channel samples.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav_bytes(&bytes)
}

pub(crate) fn decode_wav_bytes(bytes: &[u8]) -> Result<Waveform> {
    let info = parse_header(bytes, bytes.len())?;
    let ch = info.channels as usize;
    let mut channels = vec![Vec::with_capacity(info.frames); ch];
    let data = &bytes[info.data_offset..];
    match info.format {
        SampleFormat::Pcm16 => {
            for (i, s) in data.chunks_exact(2).take(info.frames * ch).enumerate() {
                let v = i16::from_le_bytes([s[0], s[1]]);
                channels[i % ch].push(v as f32 / 32768.0);
            }
        }
        SampleFormat::Float32 => {
            for (i, s) in data.chunks_exact(4).take(info.frames * ch).enumerate() {
                let v = f32::from_le_bytes([s[0], s[1], s[2], s[3]]);
                if !v.is_finite() {
                    return Err(bad("non-finite float sample"));
                }
                channels[i % ch].push(v.clamp(-1.0, 1.0));
            }
        }
    }
    Waveform::new(channels, info.sample_rate)
}

fn to_i16(v: f32) -> i16 {
    (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes as interleaved 16-bit PCM; samples are scaled by 32768, rounded and saturated.
pub fn encode_wav_pcm16(w: &Waveform) -> Vec<u8> {
    let ch = w.n_channels();
    let data_len = w.len() * ch * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(ch as u16).to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * ch as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(ch as u16 * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..w.len() {
        for c in w.channels() {
            out.extend_from_slice(&to_i16(c[i]).to_le_bytes());
        }
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav_pcm16(w)).map_err(|e| Error::io(path, e))
}
