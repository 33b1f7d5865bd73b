//! Detection measures over frame activity and event lists.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ranking::Counts;
use crate::error::{Error, Result};

/// Running totals of the segment-based measures, pooled over clips.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentStats {
    pub counts: Counts,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_active: usize,
}

impl SegmentStats {
    /// Adds one clip of `frames × classes` activity, max-pooled into segments of `segment_frames`.
    /// A trailing partial segment counts as a segment.
    pub fn accumulate(
        &mut self,
        reference: &[bool],
        estimate: &[bool],
        classes: usize,
        segment_frames: usize,
    ) -> Result<()> {
        if reference.len() != estimate.len() || classes == 0 || reference.len() % classes != 0 {
            return Err(Error::Shape(format!(
                "activity lengths {} and {} do not form frames × {classes}",
                reference.len(),
                estimate.len()
            )));
        }
        if segment_frames == 0 {
            return Err(Error::InvalidInput(
                "segment must span at least one frame".into(),
            ));
        }
        let frames = reference.len() / classes;
        for start in (0..frames).step_by(segment_frames) {
            let end = (start + segment_frames).min(frames);
            let pooled = |a: &[bool], c: usize| (start..end).any(|f| a[f * classes + c]);
            let (mut tp, mut fp, mut fn_, mut n_ref) = (0, 0, 0, 0);
            for c in 0..classes {
                let (r, e) = (pooled(reference, c), pooled(estimate, c));
                tp += usize::from(r && e);
                fp += usize::from(e && !r);
                fn_ += usize::from(r && !e);
                n_ref += usize::from(r);
            }
            self.counts.tp += tp;
            self.counts.fp += fp;
            self.counts.fn_ += fn_;
            self.substitutions += fn_.min(fp);
            self.deletions += fn_.saturating_sub(fp);
            self.insertions += fp.saturating_sub(fn_);
            self.reference_active += n_ref;
        }
        Ok(())
    }

    pub fn f1(&self) -> f64 {
        self.counts.f1()
    }

    /// `(S + D + I) / N`; `None` when the reference has no active segment.
    pub fn error_rate(&self) -> Option<f64> {
        (self.reference_active > 0).then(|| {
            (self.substitutions + self.deletions + self.insertions) as f64
                / self.reference_active as f64
        })
    }
}

/// Segment F1 and error rate of a single clip.
pub fn segment_metrics(
    reference: &[bool],
    estimate: &[bool],
    classes: usize,
    segment_frames: usize,
) -> Result<SegmentStats> {
    let mut s = SegmentStats::default();
    s.accumulate(reference, estimate, classes, segment_frames)?;
    Ok(s)
}

/// One detected or annotated event of a clip, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub clip_id: String,
    pub class: usize,
    pub onset: f64,
    pub offset: f64,
}

impl EventRecord {
    pub fn new(clip_id: impl Into<String>, class: usize, onset: f64, offset: f64) -> Self {
        Self {
            clip_id: clip_id.into(),
            class,
            onset,
            offset,
        }
    }
}

/// Onset collar and offset tolerance of event matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collar {
    pub onset: f64,
    /// Offset tolerance is `max(onset collar, offset_fraction · reference duration)`.
    pub offset_fraction: f64,
}

impl Default for Collar {
    fn default() -> Self {
        Self {
            onset: 0.2,
            offset_fraction: 0.2,
        }
    }
}

impl Collar {
    pub fn matches(&self, reference: &EventRecord, estimate: &EventRecord) -> bool {
        let tol = self
            .onset
            .max(self.offset_fraction * (reference.offset - reference.onset));
        // Small slack absorbs decimal rounding in times such as 1.15 − 1.0.
        const EPS: f64 = 1e-9;
        (estimate.onset - reference.onset).abs() <= self.onset + EPS
            && (estimate.offset - reference.offset).abs() <= tol + EPS
    }
}

type Groups<'a> = BTreeMap<(&'a str, usize), Vec<&'a EventRecord>>;

fn group(events: &[EventRecord]) -> Groups<'_> {
    let mut g: Groups = BTreeMap::new();
    for e in events {
        g.entry((e.clip_id.as_str(), e.class)).or_default().push(e);
    }
    for v in g.values_mut() {
        v.sort_by(|a, b| {
            a.onset
                .total_cmp(&b.onset)
                .then(a.offset.total_cmp(&b.offset))
        });
    }
    g
}

/// Event-level counts from greedy one-to-one matching within each clip and class.
///
/// Reference events are visited by onset; each takes the earliest-onset unmatched estimate that
/// falls inside the collar.
pub fn event_counts(
    reference: &[EventRecord],
    estimate: &[EventRecord],
    collar: Collar,
) -> Result<Counts> {
    for e in reference.iter().chain(estimate) {
        if !(e.onset < e.offset) {
            return Err(Error::InvalidInput(format!(
                "event {}..{} in {} has no positive duration",
                e.onset, e.offset, e.clip_id
            )));
        }
    }
    let (refs, ests) = (group(reference), group(estimate));
    let mut counts = Counts::default();
    for (key, r) in &refs {
        let e = ests.get(key).map_or(&[][..], Vec::as_slice);
        let mut used = vec![false; e.len()];
        for re in r {
            match (0..e.len()).find(|&i| !used[i] && collar.matches(re, e[i])) {
                Some(i) => {
                    used[i] = true;
                    counts.tp += 1;
                }
                None => counts.fn_ += 1,
            }
        }
        counts.fp += used.iter().filter(|u| !**u).count();
    }
    counts.fp += ests
        .iter()
        .filter(|(k, _)| !refs.contains_key(*k))
        .map(|(_, v)| v.len())
        .sum::<usize>();
    Ok(counts)
}

/// Event-based F1 with the given collar.
pub fn event_f1(
    reference: &[EventRecord],
    estimate: &[EventRecord],
    collar: Collar,
) -> Result<f64> {
    Ok(event_counts(reference, estimate, collar)?.f1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_counts_once() {
        // One segment, two classes: reference A, estimate B.
        let r = vec![true, false];
        let e = vec![false, true];
        let s = segment_metrics(&r, &e, 2, 64).unwrap();
        assert_eq!((s.substitutions, s.deletions, s.insertions), (1, 0, 0));
        assert_eq!(s.error_rate(), Some(1.0));
        assert_eq!(s.f1(), 0.0);
    }

    #[test]
    fn collar_arithmetic() {
        let r = EventRecord::new("a", 0, 1.0, 2.0);
        assert!(Collar::default().matches(&r, &EventRecord::new("a", 0, 1.15, 2.1)));
        assert!(!Collar::default().matches(&r, &EventRecord::new("a", 0, 1.3, 2.0)));
        let long = EventRecord::new("a", 0, 0.0, 5.0);
        assert!(Collar::default().matches(&long, &EventRecord::new("a", 0, 0.0, 5.9)));
    }
}
