//! Localisation measures and the combined SELD score.

use crate::error::{Error, Result};

/// Frame activity with per-(frame, class) directions in degrees, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeldFrames {
    pub frames: usize,
    pub classes: usize,
    pub active: Vec<bool>,
    pub azimuth: Vec<f64>,
    pub elevation: Vec<f64>,
}

impl SeldFrames {
    pub fn new(
        frames: usize,
        classes: usize,
        active: Vec<bool>,
        azimuth: Vec<f64>,
        elevation: Vec<f64>,
    ) -> Result<Self> {
        let n = frames * classes;
        if active.len() != n || azimuth.len() != n || elevation.len() != n {
            return Err(Error::Shape(format!(
                "{frames}×{classes} SELD frames need {n} entries per field"
            )));
        }
        Ok(Self {
            frames,
            classes,
            active,
            azimuth,
            elevation,
        })
    }

    fn check_pair(&self, other: &Self) -> Result<()> {
        if (self.frames, self.classes) != (other.frames, other.classes) {
            return Err(Error::Shape(format!(
                "{}×{} frames against {}×{}",
                self.frames, self.classes, other.frames, other.classes
            )));
        }
        Ok(())
    }
}

/// Great-circle angle between two directions, degrees in and out.
///
/// Equal to `acos(sin e₁ sin e₂ + cos e₁ cos e₂ cos(a₁ − a₂))`, evaluated through `atan2` of the
/// cross and dot products so that small angles keep full precision.
pub fn central_angle(azi1: f64, ele1: f64, azi2: f64, ele2: f64) -> f64 {
    let unit = |a: f64, e: f64| {
        let (a, e) = (a.to_radians(), e.to_radians());
        [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()]
    };
    let (u, v) = (unit(azi1, ele1), unit(azi2, ele2));
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    sin.atan2(dot).to_degrees()
}

/// Mean central angle where both reference and estimate are active; `None` if that never happens.
pub fn doa_error(reference: &SeldFrames, estimate: &SeldFrames) -> Result<Option<f64>> {
    reference.check_pair(estimate)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..reference.active.len() {
        if reference.active[i] && estimate.active[i] {
            sum += central_angle(
                reference.azimuth[i],
                reference.elevation[i],
                estimate.azimuth[i],
                estimate.elevation[i],
            );
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Fraction of frames whose count of active estimates equals the count of active references.
pub fn frame_recall(reference: &SeldFrames, estimate: &SeldFrames) -> Result<f64> {
    reference.check_pair(estimate)?;
    if reference.frames == 0 {
        return Err(Error::InvalidInput("frame recall of an empty clip".into()));
    }
    let k = reference.classes;
    let count = |a: &[bool]| a.iter().filter(|&&x| x).count();
    let good = reference
        .active
        .chunks(k)
        .zip(estimate.active.chunks(k))
        .filter(|(r, e)| count(r) == count(e))
        .count();
    Ok(good as f64 / reference.frames as f64)
}

/// Mean of `[er, 1 − f1, doa/180, 1 − recall]`, each clamped to `[0, 1]`.
pub fn seld_score(error_rate: f64, f1: f64, doa_degrees: f64, frame_recall: f64) -> f64 {
    let terms = [
        error_rate.clamp(0.0, 1.0),
        1.0 - f1.clamp(0.0, 1.0),
        doa_degrees.clamp(0.0, 180.0) / 180.0,
        1.0 - frame_recall.clamp(0.0, 1.0),
    ];
    terms.iter().sum::<f64>() / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        assert_eq!(central_angle(10.0, 20.0, 10.0, 20.0), 0.0);
        assert!((central_angle(0.0, 0.0, 90.0, 0.0) - 90.0).abs() < 1e-12);
        assert!((central_angle(0.0, 0.0, 180.0, 0.0) - 180.0).abs() < 1e-12);
        assert!((central_angle(0.0, 90.0, 123.0, 90.0)).abs() < 1e-6);
    }

    #[test]
    fn perfect_score_is_zero() {
        assert_eq!(seld_score(0.0, 1.0, 0.0, 1.0), 0.0);
    }
}
