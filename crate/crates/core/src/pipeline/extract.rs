use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::dataset::{write_json, FeatureIndex, IndexEntry, Normalization, INDEX_FILE, STATS_FILE};
use crate::audio::{decode_wav, load_manifest, resample, LabelBundle, Split, Vocabulary};
use crate::error::{Error, Result};
use crate::features::{write_features, LogMel, LogMelExtractor};

/// Trims or extends frame labels to `frames`; added frames are inactive.
fn fit_frames(labels: LabelBundle, frames: usize) -> LabelBundle {
    let resize_bool = |v: Vec<bool>, classes: usize| {
        let mut v = v;
        v.resize(frames * classes, false);
        v
    };
    let resize_f32 = |v: Vec<f32>, classes: usize| {
        let mut v = v;
        v.resize(frames * classes, 0.0);
        v
    };
    match labels {
        LabelBundle::Weak(v) => LabelBundle::Weak(v),
        LabelBundle::Strong {
            classes, active, ..
        } => LabelBundle::Strong {
            frames,
            classes,
            active: resize_bool(active, classes),
        },
        LabelBundle::Seld {
            classes,
            active,
            azimuth,
            elevation,
            ..
        } => LabelBundle::Seld {
            frames,
            classes,
            active: resize_bool(active, classes),
            azimuth: resize_f32(azimuth, classes),
            elevation: resize_f32(elevation, classes),
        },
    }
}

fn file_name(i: usize, clip_id: &str) -> String {
    let safe: String = clip_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{i:05}_{safe}.lmel")
}

/// Extracts log-mel features for every clip of a manifest into `out`, plus the index and the
/// training-split statistics. Output bytes depend only on the inputs and the configuration.
pub fn extract(
    manifest: &Path,
    vocabulary: &Path,
    events: Option<&Path>,
    out: &Path,
    cfg: &ExperimentConfig,
) -> Result<FeatureIndex> {
    let vocab = Vocabulary::load(vocabulary)?;
    let clips = load_manifest(manifest, &vocab, events)?;
    if clips.is_empty() {
        return Err(Error::Manifest("manifest lists no clips".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let extractor = LogMelExtractor::new(cfg.stft, cfg.mel)?;

    let features: Vec<LogMel> = clips
        .par_iter()
        .enumerate()
        .map(|(i, clip)| -> Result<LogMel> {
            let mut w = decode_wav(&clip.path)?;
            if w.sample_rate() != cfg.stft.sample_rate {
                w = resample(&w, cfg.stft.sample_rate)?;
            }
            let m = extractor.extract(&w)?;
            write_features(out.join(file_name(i, &clip.clip_id)), &m)?;
            Ok(m)
        })
        .collect::<Result<_>>()?;

    let channels = features[0].channels;
    if let Some((c, _)) = clips
        .iter()
        .zip(&features)
        .find(|(_, f)| f.channels != channels)
    {
        return Err(Error::InvalidInput(format!(
            "clip {} has a different channel count from the first clip",
            c.clip_id
        )));
    }
    let train = clips
        .iter()
        .zip(&features)
        .filter(|(c, _)| c.split == Split::Train)
        .map(|(_, f)| f);
    let stats = Normalization::fit(train, cfg.mel.n_mels)?;

    let index = FeatureIndex {
        classes: vocab.names().to_vec(),
        channels,
        stft: cfg.stft,
        mel: cfg.mel,
        clips: clips
            .into_iter()
            .zip(&features)
            .enumerate()
            .map(|(i, (c, f))| IndexEntry {
                file: file_name(i, &c.clip_id),
                clip_id: c.clip_id,
                split: c.split,
                fold: c.fold,
                frames: f.frames,
                labels: fit_frames(c.labels, f.frames),
            })
            .collect(),
    };
    write_json(&out.join(STATS_FILE), &stats)?;
    write_json(&out.join(INDEX_FILE), &index)?;
    Ok(index)
}
