//! Binary checkpoint format.
//!
//! ```text
//! "CKPT" | u32 version | u32 count | count × entry | u32 has_adam
//!   [ u64 step | f64 lr | f64 beta1 | f64 beta2 | f64 eps | u32 count | count × entry ]
//! entry = u32 name_len | name (UTF-8) | u32 rank | rank × u32 dim | f32 payload (C order)
//! ```
//!
//! All integers and floats are little-endian. Parameters and batch-norm buffers share the
//! entry list; Adam moments are stored as `adam.m.<name>` / `adam.v.<name>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::param::ParamStore;
use crate::nn::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamSnapshot {
    pub step: u64,
    pub config: AdamConfig,
    pub moments: Vec<(String, Tensor<f32>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub adam: Option<AdamSnapshot>,
}

fn io_err(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated("checkpoint ended early".into())
    } else {
        Error::io("<checkpoint>", e)
    }
}

fn write_entry<W: Write, F: Scalar>(w: &mut W, name: &str, t: &Tensor<F>) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(f64::from_le_bytes(b))
}

fn read_entry<R: Read>(r: &mut R) -> Result<(String, Tensor<f32>)> {
    let len = read_u32(r)? as usize;
    let mut name = vec![0; len];
    r.read_exact(&mut name).map_err(io_err)?;
    let name = String::from_utf8(name)
        .map_err(|_| Error::InvalidInput("checkpoint entry name is not UTF-8".into()))?;
    let rank = read_u32(r)? as usize;
    let shape = (0..rank)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut bytes = vec![0; n * 4];
    r.read_exact(&mut bytes).map_err(io_err)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((name, Tensor::from_vec(&shape, data)?))
}

pub fn write_checkpoint<W: Write, F: Scalar>(
    mut w: W,
    store: &ParamStore<F>,
    adam: Option<&Adam<F>>,
) -> Result<()> {
    let run = |w: &mut W| -> std::io::Result<()> {
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let entries: Vec<_> = store.named_tensors().collect();
        w.write_all(&(entries.len() as u32).to_le_bytes())?;
        for p in entries {
            write_entry(w, &p.name, &p.tensor)?;
        }
        match adam {
            None => w.write_all(&0u32.to_le_bytes())?,
            Some(a) => {
                w.write_all(&1u32.to_le_bytes())?;
                w.write_all(&a.step.to_le_bytes())?;
                for v in [a.config.lr, a.config.beta1, a.config.beta2, a.config.eps] {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&(2 * a.m.len() as u32).to_le_bytes())?;
                for (i, p) in store.params().iter().enumerate() {
                    write_entry(w, &format!("adam.m.{}", p.name), &a.m[i])?;
                    write_entry(w, &format!("adam.v.{}", p.name), &a.v[i])?;
                }
            }
        }
        w.flush()
    };
    run(&mut w).map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::MagicMismatch {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_u32(&mut r)?;
    let tensors = (0..count)
        .map(|_| read_entry(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let adam = match read_u32(&mut r)? {
        0 => None,
        _ => {
            let mut b = [0; 8];
            r.read_exact(&mut b).map_err(io_err)?;
            let step = u64::from_le_bytes(b);
            let config = AdamConfig {
                lr: read_f64(&mut r)?,
                beta1: read_f64(&mut r)?,
                beta2: read_f64(&mut r)?,
                eps: read_f64(&mut r)?,
            };
            let count = read_u32(&mut r)?;
            let moments = (0..count)
                .map(|_| read_entry(&mut r))
                .collect::<Result<Vec<_>>>()?;
            Some(AdamSnapshot {
                step,
                config,
                moments,
            })
        }
    };
    Ok(Checkpoint { tensors, adam })
}

pub fn save_checkpoint<F: Scalar>(
    path: &Path,
    store: &ParamStore<F>,
    adam: Option<&Adam<F>>,
) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(f), store, adam)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

impl Checkpoint {
    /// Copies every stored tensor into `store`; every name in `store` must be present.
    pub fn restore<F: Scalar>(&self, store: &mut ParamStore<F>) -> Result<()> {
        let expected = store.named_tensors().count();
        if expected != self.tensors.len() {
            return Err(Error::InvalidInput(format!(
                "checkpoint holds {} tensors, model expects {expected}",
                self.tensors.len()
            )));
        }
        for (name, t) in &self.tensors {
            store.set(name, t.cast())?;
        }
        Ok(())
    }

    /// Rebuilds optimizer state for `store` if the checkpoint carries one.
    pub fn restore_adam<F: Scalar>(&self, store: &ParamStore<F>) -> Result<Option<Adam<F>>> {
        let Some(snap) = &self.adam else {
            return Ok(None);
        };
        let mut adam = Adam::new(snap.config, store);
        adam.step = snap.step;
        let find = |key: String| {
            snap.moments
                .iter()
                .find(|(n, _)| *n == key)
                .map(|(_, t)| t.cast())
                .ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks `{key}`")))
        };
        for (i, p) in store.params().iter().enumerate() {
            adam.m[i] = find(format!("adam.m.{}", p.name))?;
            adam.v[i] = find(format!("adam.v.{}", p.name))?;
        }
        Ok(Some(adam))
    }
}
