use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
    /// Reflect-pad by `window_size / 2` at both ends and keep `floor(n / hop)` frames.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_size: 1024,
            hop_size: 500,
            sample_rate: 32000,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn n_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_size as f64
    }

    /// Frames produced for a clip of `n` samples.
    pub fn n_frames(&self, n: usize) -> usize {
        if self.center {
            n / self.hop_size
        } else if n < self.window_size {
            0
        } else {
            1 + (n - self.window_size) / self.hop_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 || self.hop_size == 0 || self.sample_rate == 0 {
            return Err(Error::Config(
                "STFT window, hop and sample rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Index into `[0, n)` for position `i` of the signal extended by mirror reflection without
/// repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Power spectrogram `|X|²` of one channel, `frames × (window/2 + 1)` row-major.
pub(crate) fn power_spectrogram(x: &[f32], cfg: &StftConfig, fft: &Arc<dyn Fft<f64>>) -> Vec<f64> {
    let win = cfg.window_size;
    let bins = cfg.n_bins();
    let frames = cfg.n_frames(x.len());
    let window = hann(win);
    let offset = if cfg.center { -((win / 2) as isize) } else { 0 };
    let mut out = vec![0.0; frames * bins];
    out.par_chunks_mut(bins).enumerate().for_each(|(f, row)| {
        let start = offset + (f * cfg.hop_size) as isize;
        let mut buf: Vec<Complex<f64>> = (0..win)
            .map(|i| {
                let j = start + i as isize;
                let v = if j >= 0 && (j as usize) < x.len() {
                    x[j as usize]
                } else {
                    x[reflect(j, x.len())]
                };
                Complex::new(v as f64 * window[i], 0.0)
            })
            .collect();
        fft.process(&mut buf);
        for (r, c) in row.iter_mut().zip(&buf) {
            *r = c.norm_sqr();
        }
    });
    out
}

/// Magnitude spectrogram per channel, each `frames × (window/2 + 1)`.
pub fn stft_magnitude(w: &Waveform, cfg: &StftConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::InvalidInput(format!(
            "waveform is at {} Hz but the STFT expects {} Hz",
            w.sample_rate(),
            cfg.sample_rate
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(cfg.window_size);
    Ok(w.channels()
        .iter()
        .map(|c| {
            power_spectrogram(c, cfg, &fft)
                .into_iter()
                .map(f64::sqrt)
                .collect()
        })
        .collect())
}
