//! Fixed-length segmentation of clips and their frame labels.

use serde::{Deserialize, Serialize};

use super::labels::{LabelBundle, FRAME_RATE};
use super::Waveform;
use crate::error::{Error, Result};

/// How to fill a segment that runs past the end of the clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadPolicy {
    /// Tile the clip end to end.
    Repeat,
    Zero,
    /// Drop incomplete segments.
    None,
}

/// Segment start offsets for a sequence of `len` items.
///
/// Full segments start at multiples of `hop`. If they leave a tail uncovered, one more
/// segment starts at the next multiple of `hop` and is padded; a clip shorter than one
/// segment yields a single padded segment at 0. Padded segments are omitted under
/// [`PadPolicy::None`].
fn starts(len: usize, seg: usize, hop: usize, pad: PadPolicy) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut s = 0;
    while s + seg <= len {
        out.push(s);
        s += hop;
    }
    let covered = out.last().map_or(0, |&l| l + seg);
    if covered < len && pad != PadPolicy::None {
        out.push(s);
    }
    out
}

/// Source position for offset `i` of the segment at `start`, or `None` for a zero sample.
pub(crate) fn source(start: usize, i: usize, len: usize, pad: PadPolicy) -> Option<usize> {
    let j = start + i;
    if j < len {
        Some(j)
    } else {
        match pad {
            PadPolicy::Repeat => Some(j % len),
            PadPolicy::Zero | PadPolicy::None => None,
        }
    }
}

fn to_samples(seconds: f64, rate: f64, what: &str) -> Result<usize> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} must be positive")));
    }
    Ok((seconds * rate).round().max(1.0) as usize)
}

/// Start sample of every segment [`segment_clip`] produces.
pub fn segment_starts(
    n_samples: usize,
    sample_rate: u32,
    segment_seconds: f64,
    hop_seconds: f64,
    pad: PadPolicy,
) -> Result<Vec<usize>> {
    let rate = sample_rate as f64;
    let seg = to_samples(segment_seconds, rate, "segment length")?;
    let hop = to_samples(hop_seconds, rate, "hop")?;
    Ok(starts(n_samples, seg, hop, pad))
}

/// Cuts `w` into segments of exactly `segment_seconds · sample_rate` samples.
pub fn segment_clip(
    w: &Waveform,
    segment_seconds: f64,
    hop_seconds: f64,
    pad: PadPolicy,
) -> Result<Vec<Waveform>> {
    let seg = to_samples(segment_seconds, w.sample_rate() as f64, "segment length")?;
    let len = w.len();
    segment_starts(len, w.sample_rate(), segment_seconds, hop_seconds, pad)?
        .into_iter()
        .map(|start| {
            let channels = w
                .channels()
                .iter()
                .map(|c| {
                    (0..seg)
                        .map(|i| source(start, i, len, pad).map_or(0.0, |j| c[j]))
                        .collect()
                })
                .collect();
            Waveform::new(channels, w.sample_rate())
        })
        .collect()
}

/// Label slices matching the segments that start at `starts` (in samples at `sample_rate`).
///
/// Weak labels are inherited unchanged. Frame labels are cut on the 64 fps grid with the same
/// padding rule, so repeated audio carries repeated labels and zero padding carries inactivity.
pub fn segment_labels(
    labels: &LabelBundle,
    starts: &[usize],
    sample_rate: u32,
    segment_seconds: f64,
    pad: PadPolicy,
) -> Result<Vec<LabelBundle>> {
    let seg = to_samples(segment_seconds, FRAME_RATE, "segment length")?;
    let frame_start = |s: usize| (s as f64 * FRAME_RATE / sample_rate as f64).round() as usize;
    let slice = |frames: usize, classes: usize, start: usize| -> Vec<Option<usize>> {
        (0..seg * classes)
            .map(|i| source(start, i / classes, frames, pad).map(|f| f * classes + i % classes))
            .collect()
    };
    Ok(starts
        .iter()
        .map(|&s| match labels {
            LabelBundle::Weak(v) => LabelBundle::Weak(v.clone()),
            LabelBundle::Strong {
                frames,
                classes,
                active,
            } => LabelBundle::Strong {
                frames: seg,
                classes: *classes,
                active: slice(*frames, *classes, frame_start(s))
                    .into_iter()
                    .map(|j| j.is_some_and(|j| active[j]))
                    .collect(),
            },
            LabelBundle::Seld {
                frames,
                classes,
                active,
                azimuth,
                elevation,
            } => {
                let idx = slice(*frames, *classes, frame_start(s));
                LabelBundle::Seld {
                    frames: seg,
                    classes: *classes,
                    active: idx.iter().map(|j| j.is_some_and(|j| active[j])).collect(),
                    azimuth: idx.iter().map(|j| j.map_or(0.0, |j| azimuth[j])).collect(),
                    elevation: idx
                        .iter()
                        .map(|j| j.map_or(0.0, |j| elevation[j]))
                        .collect(),
                }
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_rules() {
        assert_eq!(starts(12, 5, 5, PadPolicy::Repeat), vec![0, 5, 10]);
        assert_eq!(starts(12, 5, 5, PadPolicy::None), vec![0, 5]);
        assert_eq!(starts(10, 10, 5, PadPolicy::Repeat), vec![0]);
        assert_eq!(starts(2, 5, 5, PadPolicy::Zero), vec![0]);
        assert_eq!(starts(2, 5, 5, PadPolicy::None), Vec::<usize>::new());
        assert_eq!(starts(0, 5, 5, PadPolicy::Repeat), Vec::<usize>::new());
    }

    #[test]
    fn zero_padding_fills_with_silence() {
        let w = Waveform::mono(vec![0.5; 3], 1).unwrap();
        let s = segment_clip(&w, 5.0, 5.0, PadPolicy::Zero).unwrap();
        assert_eq!(s[0].channel(0), &[0.5, 0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn strong_labels_tile_with_audio() {
        // 1.5 s clip, one event in the first 0.5 s, 2 s segments at 64 fps.
        let mut active = vec![false; 96];
        active[..32].iter_mut().for_each(|a| *a = true);
        let labels = LabelBundle::Strong {
            frames: 96,
            classes: 1,
            active,
        };
        let starts = segment_starts(96 * 500, 32000, 2.0, 2.0, PadPolicy::Repeat).unwrap();
        let out = segment_labels(&labels, &starts, 32000, 2.0, PadPolicy::Repeat).unwrap();
        let LabelBundle::Strong { frames, active, .. } = &out[0] else {
            panic!()
        };
        assert_eq!(*frames, 128);
        for (f, &a) in active.iter().enumerate() {
            assert_eq!(a, f % 96 < 32, "frame {f}");
        }
    }
}
