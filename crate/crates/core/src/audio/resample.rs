//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    /// Input samples contributing to each output sample.
    pub taps: usize,
    /// Kaiser window shape parameter.
    pub beta: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            taps: 32,
            beta: 8.0,
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// One row of `taps` coefficients per phase `p / up`, each normalized to unit DC gain.
fn polyphase_table(up: usize, down: usize, cfg: ResampleConfig) -> Vec<Vec<f64>> {
    let half = cfg.taps as f64 / 2.0;
    // Cutoff in cycles per input sample: the lower of the two Nyquist rates.
    let fc = 0.5 * (up as f64 / down as f64).min(1.0);
    let i0_beta = bessel_i0(cfg.beta);
    let lo = 1 - (cfg.taps as isize) / 2;
    (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut row: Vec<f64> = (0..cfg.taps)
                .map(|i| {
                    let tau = (lo + i as isize) as f64 - frac;
                    let r = (tau / half).clamp(-1.0, 1.0);
                    let window = bessel_i0(cfg.beta * (1.0 - r * r).sqrt()) / i0_beta;
                    2.0 * fc * sinc(2.0 * fc * tau) * window
                })
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            row
        })
        .collect()
}

/// Resamples with the default 32-tap, β = 8 kernel.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    resample_with(w, target_rate, ResampleConfig::default())
}

/// Output length is `floor(len · target / source)`; equal rates return the input unchanged.
pub fn resample_with(w: &Waveform, target_rate: u32, cfg: ResampleConfig) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidInput(
            "target sample rate must be positive".into(),
        ));
    }
    if cfg.taps < 2 || cfg.taps % 2 != 0 {
        return Err(Error::InvalidInput(
            "resampler taps must be even and at least 2".into(),
        ));
    }
    let source_rate = w.sample_rate();
    if source_rate == target_rate {
        return Ok(w.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let (up, down) = (
        (target_rate as u64 / g) as usize,
        (source_rate as u64 / g) as usize,
    );
    let table = polyphase_table(up, down, cfg);
    let n_in = w.len();
    let n_out = (n_in as u128 * up as u128 / down as u128) as usize;
    let lo = 1 - (cfg.taps as isize) / 2;
    let channels = w
        .channels()
        .iter()
        .map(|x| {
            (0..n_out)
                .map(|n| {
                    let pos = n as u128 * down as u128;
                    let base = (pos / up as u128) as isize;
                    let row = &table[(pos % up as u128) as usize];
                    let mut acc = 0.0f64;
                    for (i, &h) in row.iter().enumerate() {
                        let k = base + lo + i as isize;
                        if k >= 0 && (k as usize) < n_in {
                            acc += h * x[k as usize] as f64;
                        }
                    }
                    acc.clamp(-1.0, 1.0) as f32
                })
                .collect()
        })
        .collect();
    Waveform::new(channels, target_rate)
}
