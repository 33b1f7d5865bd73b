use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label frames per second, equal to the feature frame rate.
pub const FRAME_RATE: f64 = 64.0;

/// A sound event in seconds. Angles are in degrees and present only for localisation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub onset: f64,
    pub offset: f64,
    pub class: usize,
    pub azimuth: Option<f64>,
    pub elevation: Option<f64>,
}

impl Event {
    pub fn new(onset: f64, offset: f64, class: usize) -> Self {
        Self {
            onset,
            offset,
            class,
            azimuth: None,
            elevation: None,
        }
    }

    pub fn with_direction(mut self, azimuth: f64, elevation: f64) -> Self {
        self.azimuth = Some(azimuth);
        self.elevation = Some(elevation);
        self
    }
}

/// Targets of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelBundle {
    /// Clip-level multi-hot tags.
    Weak(Vec<bool>),
    /// Frame × class activity, row-major.
    Strong {
        frames: usize,
        classes: usize,
        active: Vec<bool>,
    },
    /// Activity plus per-(frame, class) azimuth and elevation in degrees, meaningful where active.
    Seld {
        frames: usize,
        classes: usize,
        active: Vec<bool>,
        azimuth: Vec<f32>,
        elevation: Vec<f32>,
    },
}

impl LabelBundle {
    pub fn n_classes(&self) -> usize {
        match self {
            LabelBundle::Weak(v) => v.len(),
            LabelBundle::Strong { classes, .. } | LabelBundle::Seld { classes, .. } => *classes,
        }
    }

    pub fn n_frames(&self) -> Option<usize> {
        match self {
            LabelBundle::Weak(_) => None,
            LabelBundle::Strong { frames, .. } | LabelBundle::Seld { frames, .. } => Some(*frames),
        }
    }

    /// Clip-level tags; frame labels are OR-ed over time.
    pub fn clip_tags(&self) -> Vec<bool> {
        match self {
            LabelBundle::Weak(v) => v.clone(),
            LabelBundle::Strong {
                classes, active, ..
            }
            | LabelBundle::Seld {
                classes, active, ..
            } => {
                let mut tags = vec![false; *classes];
                for row in active.chunks(*classes) {
                    for (t, &a) in tags.iter_mut().zip(row) {
                        *t |= a;
                    }
                }
                tags
            }
        }
    }

    pub fn activity(&self) -> Option<&[bool]> {
        match self {
            LabelBundle::Weak(_) => None,
            LabelBundle::Strong { active, .. } | LabelBundle::Seld { active, .. } => Some(active),
        }
    }
}

/// Element-wise OR over annotators.
pub fn aggregate_annotations(annotations: &[Vec<bool>]) -> Result<Vec<bool>> {
    let first = annotations
        .first()
        .ok_or_else(|| Error::InvalidInput("no annotations to aggregate".into()))?;
    let mut out = first.clone();
    for a in &annotations[1..] {
        if a.len() != out.len() {
            return Err(Error::InvalidInput(
                "annotations differ in class count".into(),
            ));
        }
        for (o, &v) in out.iter_mut().zip(a) {
            *o |= v;
        }
    }
    Ok(out)
}

/// Frame index of a time, `floor(t · 64)`.
pub fn frame_of(t: f64) -> usize {
    (t * FRAME_RATE).floor().max(0.0) as usize
}

/// Rasterizes events onto `frames × classes`; an event covers `[floor(on·64), floor(off·64))`.
///
/// Events with angles produce a [`LabelBundle::Seld`]; later events overwrite earlier angles
/// for the same class and frame.
pub fn rasterize_events(events: &[Event], frames: usize, classes: usize) -> Result<LabelBundle> {
    let directional = events.iter().filter(|e| e.azimuth.is_some()).count();
    if directional != 0 && directional != events.len() {
        return Err(Error::InvalidInput(
            "either all events carry angles or none".into(),
        ));
    }
    let mut active = vec![false; frames * classes];
    let mut azimuth = vec![0.0f32; if directional > 0 { frames * classes } else { 0 }];
    let mut elevation = azimuth.clone();
    for e in events {
        if e.class >= classes {
            return Err(Error::InvalidInput(format!(
                "event class {} ≥ {classes}",
                e.class
            )));
        }
        if !(e.onset >= 0.0 && e.offset >= e.onset) {
            return Err(Error::InvalidInput(format!(
                "bad event times {}..{}",
                e.onset, e.offset
            )));
        }
        for f in frame_of(e.onset)..frame_of(e.offset).min(frames) {
            let i = f * classes + e.class;
            active[i] = true;
            if let (Some(a), Some(el)) = (e.azimuth, e.elevation) {
                azimuth[i] = a as f32;
                elevation[i] = el as f32;
            }
        }
    }
    Ok(if directional > 0 {
        LabelBundle::Seld {
            frames,
            classes,
            active,
            azimuth,
            elevation,
        }
    } else {
        LabelBundle::Strong {
            frames,
            classes,
            active,
        }
    })
}

/// Maximal runs of active frames per class, as events in seconds, sorted by onset then class.
pub fn extract_events(active: &[bool], classes: usize) -> Vec<Event> {
    let frames = if classes == 0 {
        0
    } else {
        active.len() / classes
    };
    let mut events = Vec::new();
    for c in 0..classes {
        let mut start = None;
        for f in 0..=frames {
            let on = f < frames && active[f * classes + c];
            match (on, start) {
                (true, None) => start = Some(f),
                (false, Some(s)) => {
                    events.push(Event::new(s as f64 / FRAME_RATE, f as f64 / FRAME_RATE, c));
                    start = None;
                }
                _ => {}
            }
        }
    }
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.class.cmp(&b.class)));
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn or_aggregation() {
        let a = vec![vec![true, false, false], vec![false, false, true]];
        assert_eq!(aggregate_annotations(&a).unwrap(), vec![true, false, true]);
        assert!(aggregate_annotations(&[]).is_err());
        assert!(aggregate_annotations(&[vec![true], vec![true, false]]).is_err());
    }

    #[test]
    fn one_second_event_covers_frames_64_to_127() {
        let b = rasterize_events(&[Event::new(1.0, 2.0, 1)], 192, 3).unwrap();
        let active = b.activity().unwrap();
        for f in 0..192 {
            assert_eq!(active[f * 3 + 1], (64..128).contains(&f), "frame {f}");
            assert!(!active[f * 3] && !active[f * 3 + 2]);
        }
        assert_eq!(b.clip_tags(), vec![false, true, false]);
    }

    #[test]
    fn events_round_trip_through_frames() {
        let events = vec![Event::new(0.5, 1.25, 0), Event::new(1.0, 3.0, 2)];
        let b = rasterize_events(&events, 320, 3).unwrap();
        assert_eq!(extract_events(b.activity().unwrap(), 3), events);
    }

    #[test]
    fn mixed_directional_events_rejected() {
        let e = [
            Event::new(0.0, 1.0, 0).with_direction(10.0, 0.0),
            Event::new(0.0, 1.0, 1),
        ];
        assert!(rasterize_events(&e, 64, 2).is_err());
    }
}
