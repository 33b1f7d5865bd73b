use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TaskKind;
use super::dataset::{write_json, FeatureDir};
use super::train::load_model;
use crate::audio::{extract_events, Split, FRAME_RATE};
use crate::error::{Error, Result};
use crate::features::LogMel;
use crate::models::{HeadKind, Model};
use crate::nn::{sigmoid, Tensor};

pub const RUN_FILE: &str = "run.json";
pub const CLIP_SCORES_FILE: &str = "clip_scores.csv";
pub const FRAME_SCORES_FILE: &str = "frame_scores.csv";
pub const FRAME_ANGLES_FILE: &str = "frame_angles.csv";
pub const EVENTS_FILE: &str = "events.csv";

/// Provenance of a prediction directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub task: TaskKind,
    pub classes: Vec<String>,
    pub threshold: f64,
    pub fingerprint: String,
    pub seed: u64,
    pub taxonomy: Option<Vec<usize>>,
}

/// Frame-level outputs of one clip, `frames × classes` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub frames: usize,
    pub classes: usize,
    pub probabilities: Vec<f32>,
    /// Degrees, present for localisation models.
    pub azimuth: Option<Vec<f32>>,
    pub elevation: Option<Vec<f32>>,
}

/// Predicted event in seconds, with mean direction for localisation models.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedEvent {
    pub onset: f64,
    pub offset: f64,
    pub class: usize,
    pub direction: Option<(f64, f64)>,
}

fn input(features: &LogMel) -> Result<Tensor<f32>> {
    Tensor::from_vec(
        &[1, features.channels, features.frames, features.mels],
        features.data.clone(),
    )
}

fn softmax(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f32> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: f32 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Clip probabilities of one standardized clip: softmax for classification, sigmoid otherwise.
pub fn predict_clip(model: &Model<f32>, features: &LogMel) -> Result<Vec<f32>> {
    let logits = model.forward_clip(&input(features)?)?;
    Ok(match model.spec().head {
        HeadKind::ClipSoftmax => softmax(logits.data()),
        _ => logits.data().iter().map(|&v| sigmoid(v)).collect(),
    })
}

/// Wraps degrees into `[-180, 180)`.
fn wrap_azimuth(a: f32) -> f32 {
    (a + 180.0).rem_euclid(360.0) - 180.0
}

/// Frame probabilities (and directions in degrees) of one standardized clip.
pub fn predict_frames(model: &Model<f32>, features: &LogMel) -> Result<FramePrediction> {
    let out = model.forward_frames(&input(features)?)?;
    let classes = model.spec().n_classes;
    Ok(FramePrediction {
        frames: features.frames,
        classes,
        probabilities: out.logits.data().iter().map(|&v| sigmoid(v)).collect(),
        azimuth: out
            .azimuth
            .map(|t| t.data().iter().map(|&a| wrap_azimuth(a * 180.0)).collect()),
        elevation: out.elevation.map(|t| {
            t.data()
                .iter()
                .map(|&e| (e * 90.0).clamp(-90.0, 90.0))
                .collect()
        }),
    })
}

/// Thresholds frame probabilities and returns maximal runs as events.
pub fn frame_events(p: &FramePrediction, threshold: f64) -> Vec<PredictedEvent> {
    let active: Vec<bool> = p
        .probabilities
        .iter()
        .map(|&v| v as f64 >= threshold)
        .collect();
    extract_events(&active, p.classes)
        .into_iter()
        .map(|e| {
            let (a, b) = (
                (e.onset * FRAME_RATE).round() as usize,
                (e.offset * FRAME_RATE).round() as usize,
            );
            let direction = match (&p.azimuth, &p.elevation) {
                (Some(azi), Some(ele)) => {
                    let idx = (a..b).map(|f| f * p.classes + e.class);
                    let n = (b - a) as f64;
                    // Circular mean for azimuth, arithmetic mean for elevation.
                    let (s, c) = idx.clone().fold((0.0, 0.0), |(s, c), i| {
                        let r = (azi[i] as f64).to_radians();
                        (s + r.sin(), c + r.cos())
                    });
                    let mean_ele = idx.map(|i| ele[i] as f64).sum::<f64>() / n;
                    Some((
                        wrap_azimuth(s.atan2(c).to_degrees() as f32) as f64,
                        mean_ele,
                    ))
                }
                _ => None,
            };
            PredictedEvent {
                onset: e.onset,
                offset: e.offset,
                class: e.class,
                direction,
            }
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs a trained model over the clips of a feature directory and writes prediction files.
/// Returns the number of clips.
pub fn infer(
    checkpoint: &Path,
    features: &Path,
    out: &Path,
    split: Option<Split>,
) -> Result<usize> {
    let (model, meta) = load_model(checkpoint)?;
    let dir = FeatureDir::open(features)?;
    if dir.index.classes != meta.classes {
        return Err(Error::InvalidInput(
            "feature vocabulary differs from the model's".into(),
        ));
    }
    let entries: Vec<_> = dir.entries(split).collect();
    let inputs: Vec<LogMel> = entries
        .iter()
        .map(|e| {
            let mut m = dir.load_raw(e)?;
            meta.normalization.apply(&mut m)?;
            Ok(m)
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let task = meta.config.task;
    let names = meta.classes.join(",");
    if task.is_frame_level() {
        let preds: Vec<FramePrediction> = inputs
            .par_iter()
            .map(|m| predict_frames(&model, m))
            .collect::<Result<_>>()?;
        let mut scores = format!("clip_id,frame,{names}\n");
        let mut angles = String::from("clip_id,frame");
        for prefix in ["azimuth", "elevation"] {
            for n in &meta.classes {
                write!(angles, ",{prefix}_{n}").unwrap();
            }
        }
        angles.push('\n');
        let mut events = String::from("clip_id,onset_s,offset_s,label");
        if task == TaskKind::Seld {
            events.push_str(",azimuth_deg,elevation_deg");
        }
        events.push('\n');
        for (e, p) in entries.iter().zip(&preds) {
            for f in 0..p.frames {
                let row = &p.probabilities[f * p.classes..(f + 1) * p.classes];
                write!(scores, "{},{f}", e.clip_id).unwrap();
                row.iter().for_each(|v| write!(scores, ",{v}").unwrap());
                scores.push('\n');
                if let (Some(azi), Some(ele)) = (&p.azimuth, &p.elevation) {
                    write!(angles, "{},{f}", e.clip_id).unwrap();
                    for a in azi[f * p.classes..(f + 1) * p.classes]
                        .iter()
                        .chain(&ele[f * p.classes..(f + 1) * p.classes])
                    {
                        write!(angles, ",{a}").unwrap();
                    }
                    angles.push('\n');
                }
            }
            for ev in frame_events(p, meta.config.threshold) {
                write!(
                    events,
                    "{},{},{},{}",
                    e.clip_id, ev.onset, ev.offset, meta.classes[ev.class]
                )
                .unwrap();
                if let Some((a, el)) = ev.direction {
                    write!(events, ",{a},{el}").unwrap();
                }
                events.push('\n');
            }
        }
        write_text(&out.join(FRAME_SCORES_FILE), &scores)?;
        write_text(&out.join(EVENTS_FILE), &events)?;
        if task == TaskKind::Seld {
            write_text(&out.join(FRAME_ANGLES_FILE), &angles)?;
        }
    } else {
        let preds: Vec<Vec<f32>> = inputs
            .par_iter()
            .map(|m| predict_clip(&model, m))
            .collect::<Result<_>>()?;
        let mut scores = format!("clip_id,{names}\n");
        for (e, p) in entries.iter().zip(&preds) {
            scores.push_str(&e.clip_id);
            p.iter().for_each(|v| write!(scores, ",{v}").unwrap());
            scores.push('\n');
        }
        write_text(&out.join(CLIP_SCORES_FILE), &scores)?;
    }
    let run = RunInfo {
        task,
        classes: meta.classes.clone(),
        threshold: meta.config.threshold,
        fingerprint: meta.fingerprint.clone(),
        seed: meta.config.seed,
        taxonomy: meta.config.taxonomy.clone(),
    };
    write_json(&out.join(RUN_FILE), &run)?;
    Ok(entries.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_of_activity_is_one_event() {
        let mut probabilities = vec![0.1f32; 192 * 2];
        for f in 64..128 {
            probabilities[f * 2 + 1] = 0.9;
        }
        let p = FramePrediction {
            frames: 192,
            classes: 2,
            probabilities,
            azimuth: None,
            elevation: None,
        };
        let ev = frame_events(&p, 0.5);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset, ev[0].offset, ev[0].class), (1.0, 2.0, 1));
        let silent = FramePrediction {
            probabilities: vec![0.2; 384],
            ..p
        };
        assert!(frame_events(&silent, 0.5).is_empty());
    }

    #[test]
    fn azimuth_wraps() {
        assert_eq!(wrap_azimuth(190.0), -170.0);
        assert_eq!(wrap_azimuth(-180.0), -180.0);
        assert_eq!(wrap_azimuth(180.0), -180.0);
    }
}
