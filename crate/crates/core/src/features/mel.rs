use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Lower bound on mel power before the logarithm.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            f_min: 50.0,
            f_max: 14000.0,
            log_floor: 1e-10,
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `n_mels + 2` band edges in Hz, uniformly spaced on the mel scale.
pub fn mel_band_edges(cfg: &MelConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let n = cfg.n_mels + 1;
    (0..=n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

/// Triangular filters on the HTK mel scale with area normalization, `n_mels × n_bins` row-major.
///
/// Filter `i` rises from edge `i` to a peak at edge `i + 1` and falls to edge `i + 2`, scaled by
/// `2 / (f_{i+2} − f_i)`.
pub fn mel_filterbank(cfg: &MelConfig, n_bins: usize, sample_rate: u32) -> Result<Vec<f64>> {
    if cfg.n_mels < 1 {
        return Err(Error::Config("n_mels must be at least 1".into()));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= cfg.f_min && cfg.f_min < cfg.f_max && cfg.f_max <= nyquist) {
        return Err(Error::Config(format!(
            "mel range {}..{} Hz must satisfy 0 ≤ f_min < f_max ≤ {nyquist}",
            cfg.f_min, cfg.f_max
        )));
    }
    if n_bins < 2 {
        return Err(Error::Config("need at least two STFT bins".into()));
    }
    let n_fft = 2 * (n_bins - 1);
    let edges = mel_band_edges(cfg);
    let mut fb = vec![0.0; cfg.n_mels * n_bins];
    for (m, row) in fb.chunks_mut(n_bins).enumerate() {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (r - l);
        for (b, w) in row.iter_mut().enumerate() {
            let f = b as f64 * sample_rate as f64 / n_fft as f64;
            let rise = (f - l) / (c - l);
            let fall = (r - f) / (r - c);
            *w = rise.min(fall).max(0.0) * norm;
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!("mel filter {m} covers no STFT bin")));
        }
    }
    Ok(fb)
}
