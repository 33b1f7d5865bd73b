//! The extracted-feature directory: one feature file per clip, an index with labels and the
//! normalization statistics.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::audio::{
    segment::source, segment_labels, segment_starts, LabelBundle, Split, FRAME_RATE,
};
use crate::error::{Error, Result};
use crate::features::{read_features, LogMel, MelConfig, StftConfig};

pub const INDEX_FILE: &str = "index.json";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub clip_id: String,
    pub split: Split,
    pub fold: Option<u8>,
    /// Feature file name inside the directory.
    pub file: String,
    pub frames: usize,
    pub labels: LabelBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub classes: Vec<String>,
    pub channels: usize,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub clips: Vec<IndexEntry>,
}

/// Per-mel-bin mean and standard deviation of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Smallest standard deviation used when standardizing.
const MIN_STD: f64 = 1e-6;

impl Normalization {
    /// Statistics over every channel and frame of `features`.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a LogMel>, mels: usize) -> Result<Self> {
        let all: Vec<&LogMel> = features.into_iter().collect();
        let mut count = 0usize;
        let mut mean = vec![0.0; mels];
        for m in &all {
            check_mels(m, mels)?;
            for row in m.data.chunks(mels) {
                for (s, &v) in mean.iter_mut().zip(row) {
                    *s += v as f64;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidInput(
                "no training frames to compute statistics from".into(),
            ));
        }
        mean.iter_mut().for_each(|s| *s /= count as f64);
        let mut var = vec![0.0; mels];
        for m in &all {
            for row in m.data.chunks(mels) {
                for ((s, &v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v as f64 - mu).powi(2);
                }
            }
        }
        let std = var.iter().map(|s| (s / count as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, m: &mut LogMel) -> Result<()> {
        check_mels(m, self.mean.len())?;
        let scale: Vec<f32> = self
            .std
            .iter()
            .map(|s| (1.0 / s.max(MIN_STD)) as f32)
            .collect();
        let mean: Vec<f32> = self.mean.iter().map(|&v| v as f32).collect();
        for row in m.data.chunks_mut(m.mels) {
            for ((v, mu), k) in row.iter_mut().zip(&mean).zip(&scale) {
                *v = (*v - mu) * k;
            }
        }
        Ok(())
    }
}

fn check_mels(m: &LogMel, mels: usize) -> Result<()> {
    if m.mels != mels {
        return Err(Error::Shape(format!(
            "features have {} mel bins, expected {mels}",
            m.mels
        )));
    }
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// An opened feature directory.
#[derive(Debug, Clone)]
pub struct FeatureDir {
    pub root: PathBuf,
    pub index: FeatureIndex,
    pub stats: Normalization,
}

impl FeatureDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let index: FeatureIndex = read_json(&root.join(INDEX_FILE))?;
        let stats: Normalization = read_json(&root.join(STATS_FILE))?;
        if stats.mean.len() != index.mel.n_mels || stats.std.len() != index.mel.n_mels {
            return Err(Error::Shape(
                "statistics do not match the mel configuration".into(),
            ));
        }
        Ok(Self { root, index, stats })
    }

    /// Standardized features of one clip.
    pub fn load(&self, entry: &IndexEntry) -> Result<LogMel> {
        let mut m = self.load_raw(entry)?;
        self.stats.apply(&mut m)?;
        Ok(m)
    }

    /// Features of one clip as extracted.
    pub fn load_raw(&self, entry: &IndexEntry) -> Result<LogMel> {
        let m = read_features(self.root.join(&entry.file))?;
        if m.frames != entry.frames || m.channels != self.index.channels {
            return Err(Error::Shape(format!(
                "{}: {}×{} frames/channels on disk, index says {}×{}",
                entry.file, m.frames, m.channels, entry.frames, self.index.channels
            )));
        }
        Ok(m)
    }

    pub fn entries(&self, split: Option<Split>) -> impl Iterator<Item = &IndexEntry> {
        self.index
            .clips
            .iter()
            .filter(move |e| split.is_none_or(|s| e.split == s))
    }
}

/// One training example: `channels × frames × mels` features and aligned labels.
#[derive(Debug, Clone)]
pub struct Example {
    pub clip_id: String,
    pub features: LogMel,
    pub labels: LabelBundle,
}

/// Cuts a clip into training segments with the configured length, hop and padding.
pub fn segment_example(ex: Example, cfg: &ExperimentConfig) -> Result<Vec<Example>> {
    let Some(seg_s) = cfg.segment_seconds else {
        return Ok(vec![ex]);
    };
    let hop_s = cfg.hop_seconds.unwrap_or(seg_s);
    let rate = FRAME_RATE as u32;
    let f = &ex.features;
    let starts = segment_starts(f.frames, rate, seg_s, hop_s, cfg.pad)?;
    let labels = segment_labels(&ex.labels, &starts, rate, seg_s, cfg.pad)?;
    let seg = (seg_s * FRAME_RATE).round() as usize;
    Ok(starts
        .iter()
        .zip(labels)
        .map(|(&s, labels)| {
            let mut data = vec![0.0; f.channels * seg * f.mels];
            for c in 0..f.channels {
                for i in 0..seg {
                    if let Some(j) = source(s, i, f.frames, cfg.pad) {
                        let dst = (c * seg + i) * f.mels;
                        let src = (c * f.frames + j) * f.mels;
                        data[dst..dst + f.mels].copy_from_slice(&f.data[src..src + f.mels]);
                    }
                }
            }
            Example {
                clip_id: ex.clip_id.clone(),
                features: LogMel {
                    channels: f.channels,
                    frames: seg,
                    mels: f.mels,
                    data,
                },
                labels,
            }
        })
        .collect())
}
