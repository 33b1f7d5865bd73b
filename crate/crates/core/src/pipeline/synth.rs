//! Seeded, class-separable synthetic datasets in the on-disk layout `extract` reads.
//!
//! Every class owns a spectral signature centred on its own mel band: a steady sine, a slow chirp
//! or a narrow noise band. Clip tasks fill the whole clip with the signatures of its tags; frame
//! tasks place one to three events in disjoint time slots.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TaskKind;
use crate::audio::{write_wav_pcm16, Waveform};
use crate::error::{Error, Result};
use crate::features::{mel_band_edges, MelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub task: TaskKind,
    /// Training clips.
    pub clips: usize,
    /// Additional clips in the evaluation split.
    pub eval_clips: usize,
    pub seconds: f64,
    pub classes: usize,
    pub sample_rate: u32,
    pub seed: u64,
    /// Snaps event boundaries to multiples of this many seconds.
    pub event_grid: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::ClipClass,
            clips: 8,
            eval_clips: 0,
            seconds: 10.0,
            classes: 3,
            sample_rate: 32000,
            seed: 0,
            event_grid: None,
        }
    }
}

/// Paths of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub manifest: PathBuf,
    pub vocabulary: PathBuf,
    pub events: Option<PathBuf>,
}

const KINDS: [&str; 3] = ["sine", "chirp", "noise"];
const EVENT_AMPLITUDE: f64 = 0.3;
const BACKGROUND: f64 = 0.003;
const MAX_CLASSES: usize = 12;

pub fn class_name(class: usize) -> String {
    format!("{}{class}", KINDS[class % 3])
}

/// Centre frequency of a class: the centre of a mel filter, spread evenly over the filterbank.
pub fn class_frequency(class: usize, classes: usize) -> f64 {
    let edges = mel_band_edges(&MelConfig::default());
    let n_mels = edges.len() - 2;
    let lo = 6;
    let span = n_mels - 4 - lo;
    let m = lo + (class * span) / classes.max(1);
    edges[m + 1]
}

/// `n` samples of a class signature with unit peak.
pub fn class_signature(
    class: usize,
    classes: usize,
    n: usize,
    sample_rate: u32,
    seed: u64,
) -> Vec<f32> {
    let f0 = class_frequency(class, classes);
    let sr = sample_rate as f64;
    let x: Vec<f64> = match class % 3 {
        0 => (0..n).map(|i| (TAU * f0 * i as f64 / sr).sin()).collect(),
        1 => {
            // Triangle sweep of ±3 % with a one-second period.
            let mut phase = 0.0f64;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let tri = 4.0 * (t - (t + 0.5).floor()).abs() - 1.0;
                    let v = phase.sin();
                    phase += TAU * f0 * (1.0 + 0.03 * tri) / sr;
                    v
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_0000 + class as u64));
            let partials: Vec<(f64, f64)> = (0..12)
                .map(|_| {
                    (
                        f0 * (1.0 + rng.gen_range(-0.04..0.04)),
                        rng.gen_range(0.0..TAU),
                    )
                })
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    partials
                        .iter()
                        .map(|(f, p)| (TAU * f * t + p).sin())
                        .sum::<f64>()
                })
                .collect()
        }
    };
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    x.iter().map(|v| (v / peak) as f32).collect()
}

struct SynthEvent {
    class: usize,
    onset: f64,
    offset: f64,
}

/// Raised-cosine ramps of 10 ms at both ends of `[start, end)`.
fn envelope(i: usize, start: usize, end: usize, ramp: usize) -> f64 {
    let from_start = i - start;
    let to_end = end - 1 - i;
    let r = from_start.min(to_end);
    if r >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (std::f64::consts::PI * r as f64 / ramp as f64).cos()
    }
}

fn round4(t: f64) -> f64 {
    (t * 1e4).round() / 1e4
}

fn plan_events(
    rng: &mut ChaCha8Rng,
    classes: usize,
    seconds: f64,
    grid: Option<f64>,
) -> Vec<SynthEvent> {
    let n = rng.gen_range(1..=3);
    let slot = seconds / n as f64;
    (0..n)
        .map(|k| {
            let start = k as f64 * slot + 0.05 * slot;
            let room = 0.9 * slot;
            let dur = rng.gen_range(0.4..0.9) * room;
            let mut onset = round4(start + rng.gen_range(0.0..room - dur));
            let mut offset = round4(onset + dur);
            if let Some(g) = grid {
                let cells = (seconds / g).floor();
                let a = (onset / g).round().min(cells - 1.0);
                let b = (offset / g).round().clamp(a + 1.0, cells);
                (onset, offset) = (round4(a * g), round4(b * g));
            }
            SynthEvent {
                class: rng.gen_range(0..classes),
                onset,
                offset,
            }
        })
        .collect()
}

/// Writes `audio/*.wav`, `manifest.csv`, `vocabulary.txt` and, for frame tasks, `events.csv`.
pub fn synthesize(cfg: &SynthConfig, out: &Path) -> Result<SynthDataset> {
    if cfg.classes == 0 || cfg.classes > MAX_CLASSES {
        return Err(Error::Config(format!(
            "synthetic class count must be 1..={MAX_CLASSES}"
        )));
    }
    if cfg.clips + cfg.eval_clips == 0 || !(cfg.seconds >= 1.0 && cfg.seconds.is_finite()) {
        return Err(Error::Config(
            "need at least one clip of at least one second".into(),
        ));
    }
    if cfg
        .event_grid
        .is_some_and(|g| !(g > 0.0 && g <= cfg.seconds))
    {
        return Err(Error::Config(
            "event grid must be positive and no longer than a clip".into(),
        ));
    }
    let audio_dir = out.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = (cfg.seconds * cfg.sample_rate as f64).round() as usize;
    let signatures: Vec<Vec<f32>> = (0..cfg.classes)
        .map(|c| class_signature(c, cfg.classes, n, cfg.sample_rate, cfg.seed))
        .collect();
    let directions: Vec<(f64, f64)> = (0..cfg.classes)
        .map(|_| {
            (
                10.0 * rng.gen_range(-17..=17) as f64,
                10.0 * rng.gen_range(-4..=4) as f64,
            )
        })
        .collect();
    let names: Vec<String> = (0..cfg.classes).map(class_name).collect();
    let ramp = (0.01 * cfg.sample_rate as f64) as usize;

    let mut manifest = String::from("clip_id,path,split,fold,labels\n");
    let mut events_csv = String::from(match cfg.task {
        TaskKind::Seld => "clip_id,onset_s,offset_s,label,azimuth_deg,elevation_deg\n",
        _ => "clip_id,onset_s,offset_s,label\n",
    });
    for i in 0..cfg.clips + cfg.eval_clips {
        let clip_id = format!("clip_{i:03}");
        let events: Vec<SynthEvent> = match cfg.task {
            TaskKind::ClipClass => vec![SynthEvent {
                class: i % cfg.classes,
                onset: 0.0,
                offset: cfg.seconds,
            }],
            TaskKind::ClipTag => {
                let k = rng.gen_range(1..=cfg.classes.min(3));
                let mut tags: Vec<usize> =
                    rand::seq::index::sample(&mut rng, cfg.classes, k).into_vec();
                tags.sort_unstable();
                tags.into_iter()
                    .map(|class| SynthEvent {
                        class,
                        onset: 0.0,
                        offset: cfg.seconds,
                    })
                    .collect()
            }
            TaskKind::FrameSed | TaskKind::Seld => {
                plan_events(&mut rng, cfg.classes, cfg.seconds, cfg.event_grid)
            }
        };
        let mut x: Vec<f64> = (0..n)
            .map(|_| BACKGROUND * rng.gen_range(-1.0..1.0))
            .collect();
        for e in &events {
            let start = ((e.onset * cfg.sample_rate as f64).round() as usize).min(n);
            let end = ((e.offset * cfg.sample_rate as f64).round() as usize).min(n);
            for j in start..end {
                x[j] +=
                    EVENT_AMPLITUDE * envelope(j, start, end, ramp) * signatures[e.class][j] as f64;
            }
        }
        let mono: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let channels = if cfg.task == TaskKind::Seld {
            vec![mono; 4]
        } else {
            vec![mono]
        };
        let rel = format!("audio/{clip_id}.wav");
        write_wav_pcm16(out.join(&rel), &Waveform::new(channels, cfg.sample_rate)?)?;

        let mut tags: Vec<usize> = events.iter().map(|e| e.class).collect();
        tags.sort_unstable();
        tags.dedup();
        let labels: Vec<&str> = tags.iter().map(|&c| names[c].as_str()).collect();
        let split = if i < cfg.clips { "train" } else { "evaluate" };
        writeln!(manifest, "{clip_id},{rel},{split},,{}", labels.join(";")).unwrap();
        if cfg.task.is_frame_level() {
            for e in &events {
                write!(
                    events_csv,
                    "{clip_id},{:.4},{:.4},{}",
                    e.onset, e.offset, names[e.class]
                )
                .unwrap();
                if cfg.task == TaskKind::Seld {
                    let (azi, ele) = directions[e.class];
                    write!(events_csv, ",{azi},{ele}").unwrap();
                }
                events_csv.push('\n');
            }
        }
    }
    let write = |name: &str, text: &str| -> Result<PathBuf> {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    Ok(SynthDataset {
        manifest: write("manifest.csv", &manifest)?,
        vocabulary: write("vocabulary.txt", &(names.join("\n") + "\n"))?,
        events: if cfg.task.is_frame_level() {
            Some(write("events.csv", &events_csv)?)
        } else {
            None
        },
    })
}
