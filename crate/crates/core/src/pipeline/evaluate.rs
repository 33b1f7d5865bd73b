use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TaskKind;
use super::dataset::{read_json, write_json, FeatureDir, IndexEntry};
use super::infer::{
    RunInfo, CLIP_SCORES_FILE, EVENTS_FILE, FRAME_ANGLES_FILE, FRAME_SCORES_FILE, RUN_FILE,
};
use crate::audio::{extract_events, LabelBundle, FRAME_RATE};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy_classwise, auprc, doa_error, event_f1, frame_recall, lwlrap, mean_average_precision,
    micro_f1, seld_score, Averaging, ClipScores, Collar, EventRecord, SegmentStats, SeldFrames,
    Taxonomy,
};

/// Metric values keyed by name, with the provenance of the predictions they score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    pub clips: usize,
    /// `None` where a metric is undefined for the data (for example no positive labels).
    pub metrics: BTreeMap<String, Option<f64>>,
    pub fingerprint: String,
    pub seed: u64,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Rows of a score CSV keyed by clip, in file order.
struct Table {
    rows: Vec<(String, Vec<f64>)>,
}

fn read_table(path: &Path, key_columns: usize, width: usize) -> Result<Table> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != key_columns + width {
            return Err(Error::InvalidInput(format!(
                "{}: expected {} columns, found {}",
                path.display(),
                key_columns + width,
                rec.len()
            )));
        }
        let values = rec
            .iter()
            .skip(key_columns)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("bad number `{v}` in {}", path.display()))
                })
            })
            .collect::<Result<_>>()?;
        rows.push((rec[0].to_string(), values));
    }
    Ok(Table { rows })
}

/// Frame rows grouped per clip, preserving first-seen clip order.
fn group_frames(table: Table) -> Vec<(String, Vec<f64>)> {
    let mut order: Vec<String> = Vec::new();
    let mut map: HashMap<String, Vec<f64>> = HashMap::new();
    for (clip, v) in table.rows {
        if !map.contains_key(&clip) {
            order.push(clip.clone());
        }
        map.entry(clip).or_default().extend(v);
    }
    order
        .into_iter()
        .map(|c| {
            let v = map.remove(&c).unwrap();
            (c, v)
        })
        .collect()
}

fn reference<'a>(dir: &'a FeatureDir, clip: &str) -> Result<&'a IndexEntry> {
    dir.index
        .clips
        .iter()
        .find(|e| e.clip_id == clip)
        .ok_or_else(|| Error::InvalidInput(format!("predicted clip `{clip}` has no reference")))
}

fn read_events(path: &Path, classes: &[String]) -> Result<Vec<EventRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad event time `{}`", &rec[i])))
        };
        let class = classes
            .iter()
            .position(|c| c == &rec[3])
            .ok_or_else(|| Error::Vocabulary {
                label: rec[3].to_string(),
            })?;
        out.push(EventRecord::new(&rec[0], class, num(1)?, num(2)?));
    }
    Ok(out)
}

/// Scores a prediction directory against the labels in a feature directory.
pub fn evaluate(predictions: &Path, features: &Path) -> Result<MetricReport> {
    let run: RunInfo = read_json(&predictions.join(RUN_FILE))?;
    let dir = FeatureDir::open(features)?;
    if dir.index.classes != run.classes {
        return Err(Error::InvalidInput(
            "prediction classes differ from the reference vocabulary".into(),
        ));
    }
    let k = run.classes.len();
    let mut metrics = BTreeMap::new();
    let clips;
    match run.task {
        TaskKind::ClipClass | TaskKind::ClipTag => {
            let table = read_table(&predictions.join(CLIP_SCORES_FILE), 1, k)?;
            clips = table.rows.len();
            let mut scores = Vec::with_capacity(clips * k);
            let mut targets = Vec::with_capacity(clips * k);
            for (clip, s) in &table.rows {
                scores.extend_from_slice(s);
                targets.extend(reference(&dir, clip)?.labels.clip_tags());
            }
            let c = ClipScores::new(clips, k, scores, targets)?;
            if run.task == TaskKind::ClipClass {
                let argmax = |row: &[f64]| {
                    (0..row.len())
                        .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                        .unwrap()
                };
                let pred: Vec<usize> = table.rows.iter().map(|(_, s)| argmax(s)).collect();
                let truth: Vec<usize> = (0..clips)
                    .map(|i| {
                        (0..k)
                            .position(|j| c.target(i, j))
                            .ok_or_else(|| Error::InvalidInput("clip without a class".into()))
                    })
                    .collect::<Result<_>>()?;
                metrics.insert(
                    "accuracy".into(),
                    Some(accuracy_classwise(&pred, &truth, k)?),
                );
            } else {
                metrics.insert("lwlrap".into(), lwlrap(&c).ok());
                metrics.insert("map".into(), mean_average_precision(&c).ok());
                metrics.insert("micro_auprc".into(), auprc(&c, Averaging::Micro, None).ok());
                metrics.insert("macro_auprc".into(), auprc(&c, Averaging::Macro, None).ok());
                metrics.insert("micro_f1".into(), Some(micro_f1(&c, run.threshold)));
                if let Some(map) = &run.taxonomy {
                    let t = Taxonomy::new(map.clone()).map_err(|e| Error::Config(e.to_string()))?;
                    let coarse = c.coarse(&t)?;
                    metrics.insert(
                        "coarse_micro_auprc".into(),
                        auprc(&coarse, Averaging::Micro, None).ok(),
                    );
                    metrics.insert(
                        "coarse_macro_auprc".into(),
                        auprc(&coarse, Averaging::Macro, None).ok(),
                    );
                    metrics.insert(
                        "coarse_micro_f1".into(),
                        Some(micro_f1(&coarse, run.threshold)),
                    );
                }
            }
        }
        TaskKind::FrameSed | TaskKind::Seld => {
            let frames = group_frames(read_table(&predictions.join(FRAME_SCORES_FILE), 2, k)?);
            let angles = if run.task == TaskKind::Seld {
                Some(group_frames(read_table(
                    &predictions.join(FRAME_ANGLES_FILE),
                    2,
                    2 * k,
                )?))
            } else {
                None
            };
            clips = frames.len();
            let segment = FRAME_RATE as usize;
            let mut seg = SegmentStats::default();
            let mut any_strong = false;
            let mut ref_events = Vec::new();
            let (mut clip_scores, mut clip_targets) = (Vec::new(), Vec::new());
            let mut ref_seld = Vec::new();
            let mut est_seld = Vec::new();
            for (i, (clip, probs)) in frames.iter().enumerate() {
                let entry = reference(&dir, clip)?;
                let n = probs.len() / k;
                let est: Vec<bool> = probs.iter().map(|&p| p >= run.threshold).collect();
                for j in 0..k {
                    clip_scores.push(
                        (0..n)
                            .map(|f| probs[f * k + j])
                            .fold(f64::NEG_INFINITY, f64::max),
                    );
                }
                clip_targets.extend(entry.labels.clip_tags());
                let Some(active) = entry.labels.activity() else {
                    continue;
                };
                if active.len() != est.len() {
                    return Err(Error::Shape(format!(
                        "{clip}: {n} predicted frames, {} reference",
                        entry.frames
                    )));
                }
                any_strong = true;
                seg.accumulate(active, &est, k, segment)?;
                ref_events.extend(
                    extract_events(active, k)
                        .into_iter()
                        .map(|e| EventRecord::new(clip, e.class, e.onset, e.offset)),
                );
                if let (
                    Some(angles),
                    LabelBundle::Seld {
                        azimuth, elevation, ..
                    },
                ) = (&angles, &entry.labels)
                {
                    let (aclip, a) = &angles[i];
                    if aclip != clip {
                        return Err(Error::InvalidInput(
                            "angle rows are not aligned with score rows".into(),
                        ));
                    }
                    let split = |off: usize| {
                        (0..n)
                            .flat_map(|f| (0..k).map(move |j| (f, j)))
                            .map(|(f, j)| a[f * 2 * k + off + j])
                            .collect()
                    };
                    ref_seld.push(SeldFrames::new(
                        n,
                        k,
                        active.to_vec(),
                        azimuth.iter().map(|&v| v as f64).collect(),
                        elevation.iter().map(|&v| v as f64).collect(),
                    )?);
                    est_seld.push(SeldFrames::new(n, k, est.clone(), split(0), split(k))?);
                }
            }
            let tags = ClipScores::new(clips, k, clip_scores, clip_targets)?;
            metrics.insert("tagging_map".into(), mean_average_precision(&tags).ok());
            if any_strong {
                let est_events = read_events(&predictions.join(EVENTS_FILE), &run.classes)?;
                metrics.insert("segment_f1".into(), Some(seg.f1()));
                metrics.insert("segment_error_rate".into(), seg.error_rate());
                metrics.insert(
                    "event_f1".into(),
                    Some(event_f1(&ref_events, &est_events, Collar::default())?),
                );
            }
            if run.task == TaskKind::Seld && !ref_seld.is_empty() {
                let cat = |v: &[SeldFrames]| -> Result<SeldFrames> {
                    SeldFrames::new(
                        v.iter().map(|s| s.frames).sum(),
                        k,
                        v.iter().flat_map(|s| s.active.clone()).collect(),
                        v.iter().flat_map(|s| s.azimuth.clone()).collect(),
                        v.iter().flat_map(|s| s.elevation.clone()).collect(),
                    )
                };
                let (r, e) = (cat(&ref_seld)?, cat(&est_seld)?);
                let doa = doa_error(&r, &e)?;
                let fr = frame_recall(&r, &e)?;
                metrics.insert("doa_error".into(), doa);
                metrics.insert("frame_recall".into(), Some(fr));
                let er = seg.error_rate().unwrap_or(1.0);
                metrics.insert(
                    "seld_score".into(),
                    Some(seld_score(er, seg.f1(), doa.unwrap_or(180.0), fr)),
                );
            }
        }
    }
    Ok(MetricReport {
        task: run.task,
        clips,
        metrics,
        fingerprint: run.fingerprint,
        seed: run.seed,
    })
}
