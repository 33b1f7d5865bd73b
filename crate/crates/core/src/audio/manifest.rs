//! Clip manifests and label vocabularies.
//!
//! A manifest is a UTF-8 CSV with header `clip_id,path,split,fold,labels`; `labels` holds
//! `;`-separated class names and `fold` may be empty. Relative paths resolve against the
//! manifest's directory.
//!
//! Frame labels come from an optional event sidecar with header
//! `clip_id,onset_s,offset_s,label[,azimuth_deg,elevation_deg]`. A clip listed in the sidecar
//! gets frame labels at 64 fps over `floor(duration · 64)` frames, with the duration read from
//! its WAV header; a row with an empty label marks a clip as strongly annotated but silent.
//! Clips absent from the sidecar keep their weak labels.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::{rasterize_events, Event, LabelBundle, FRAME_RATE};
use super::wav::read_wav_info;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validate,
    Evaluate,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validate" => Ok(Split::Validate),
            "evaluate" => Ok(Split::Evaluate),
            other => Err(Error::Manifest(format!("unknown split `{other}`"))),
        }
    }
}

/// Class names; line order in the vocabulary file defines the class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(';') {
                return Err(Error::Manifest(format!("invalid class name `{n}`")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Manifest(format!("class `{n}` listed twice")));
            }
        }
        Ok(Self { names, index })
    }

    /// One name per line; blank lines are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Vocabulary {
                label: name.to_string(),
            })
    }

    /// Multi-hot vector for `;`-separated names; an empty field is the all-negative vector.
    pub fn multi_hot(&self, field: &str) -> Result<Vec<bool>> {
        let mut v = vec![false; self.len()];
        for name in field.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            v[self.index(name)?] = true;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub path: PathBuf,
    pub split: Split,
    pub fold: Option<u8>,
    pub labels: LabelBundle,
}

const MANIFEST_HEADER: [&str; 5] = ["clip_id", "path", "split", "fold", "labels"];

fn check_header(found: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Manifest(format!(
            "{what} header must be `{}`, found `{}`",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Manifest(format!("line {line}: bad {what} `{s}`")))
}

fn read_events(path: &Path, vocab: &Vocabulary) -> Result<HashMap<String, Vec<Event>>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let directional = header.len() == 6;
    if directional {
        check_header(
            &header,
            &[
                "clip_id",
                "onset_s",
                "offset_s",
                "label",
                "azimuth_deg",
                "elevation_deg",
            ],
            "event sidecar",
        )?;
    } else {
        check_header(
            &header,
            &["clip_id", "onset_s", "offset_s", "label"],
            "event sidecar",
        )?;
    }
    let mut events: HashMap<String, Vec<Event>> = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Manifest(format!(
                "line {line}: expected {} fields",
                header.len()
            )));
        }
        let list = events.entry(rec[0].trim().to_string()).or_default();
        let label = rec[3].trim();
        if label.is_empty() {
            continue;
        }
        let onset = parse_f64(&rec[1], "onset", line)?;
        let offset = parse_f64(&rec[2], "offset", line)?;
        if onset < 0.0 || offset < onset {
            return Err(Error::Manifest(format!(
                "line {line}: event {onset}..{offset}"
            )));
        }
        let mut e = Event::new(onset, offset, vocab.index(label)?);
        if directional {
            let azi = parse_f64(&rec[4], "azimuth", line)?;
            let ele = parse_f64(&rec[5], "elevation", line)?;
            if !(-180.0..180.0).contains(&azi) || !(-90.0..=90.0).contains(&ele) {
                return Err(Error::Manifest(format!(
                    "line {line}: direction ({azi}, {ele}) out of range"
                )));
            }
            e = e.with_direction(azi, ele);
        }
        list.push(e);
    }
    Ok(events)
}

/// Reads a manifest, resolving labels against `vocab` and frame labels from `events`.
pub fn load_manifest(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    events: Option<&Path>,
) -> Result<Vec<ClipRecord>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    check_header(reader.headers()?, &MANIFEST_HEADER, "manifest")?;
    let mut strong = match events {
        Some(p) => read_events(p, vocab)?,
        None => HashMap::new(),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let clip_id = rec[0].trim().to_string();
        if clip_id.is_empty() {
            return Err(Error::Manifest(format!("line {line}: empty clip_id")));
        }
        if !seen.insert(clip_id.clone()) {
            return Err(Error::Manifest(format!(
                "line {line}: duplicate clip_id `{clip_id}`"
            )));
        }
        let clip_path = base.join(rec[1].trim());
        let split: Split = rec[2].trim().parse()?;
        let fold = match rec[3].trim() {
            "" => None,
            f => Some(
                f.parse::<u8>()
                    .ok()
                    .filter(|v| (1..=4).contains(v))
                    .ok_or_else(|| {
                        Error::Manifest(format!("line {line}: fold `{f}` not in 1..4"))
                    })?,
            ),
        };
        let labels = match strong.remove(&clip_id) {
            Some(ev) => {
                let info = read_wav_info(&clip_path)?;
                let frames = (info.duration_seconds() * FRAME_RATE).floor() as usize;
                rasterize_events(&ev, frames, vocab.len())?
            }
            None => LabelBundle::Weak(vocab.multi_hot(&rec[4])?),
        };
        out.push(ClipRecord {
            clip_id,
            path: clip_path,
            split,
            fold,
            labels,
        });
    }
    if let Some(id) = strong.keys().min() {
        return Err(Error::Manifest(format!(
            "event sidecar names unknown clip `{id}`"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_hot_and_unknown_label() {
        let v = Vocabulary::new(vec!["dog".into(), "cat".into(), "car".into()]).unwrap();
        assert_eq!(v.multi_hot("dog;cat").unwrap(), vec![true, true, false]);
        assert_eq!(v.multi_hot("").unwrap(), vec![false; 3]);
        assert!(matches!(
            v.multi_hot("dog;horse"),
            Err(Error::Vocabulary { .. })
        ));
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
    }
}
