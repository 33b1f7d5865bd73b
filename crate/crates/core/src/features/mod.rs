//! Log-mel front-end: framed STFT, mel filterbank, log compression and a binary store.

mod mel;
mod stft;
mod store;

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

pub use mel::{hz_to_mel, mel_band_edges, mel_filterbank, mel_to_hz, MelConfig};
pub use stft::{hann, stft_magnitude, StftConfig};
pub use store::{decode_features, encode_features, read_features, write_features};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::nn::tensor::gemm;

/// A `channels × frames × mels` block of log10 mel power, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMel {
    pub channels: usize,
    pub frames: usize,
    pub mels: usize,
    pub data: Vec<f32>,
}

impl LogMel {
    pub fn new(channels: usize, frames: usize, mels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * frames * mels {
            return Err(Error::Shape(format!(
                "{channels}×{frames}×{mels} log-mel needs {} values, got {}",
                channels * frames * mels,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            frames,
            mels,
            data,
        })
    }

    pub fn get(&self, channel: usize, frame: usize, mel: usize) -> f32 {
        self.data[(channel * self.frames + frame) * self.mels + mel]
    }

    /// One `frames × mels` plane.
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.frames * self.mels;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Reusable extractor holding the filterbank and FFT plan.
pub struct LogMelExtractor {
    stft: StftConfig,
    mel: MelConfig,
    filterbank: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl LogMelExtractor {
    pub fn new(stft: StftConfig, mel: MelConfig) -> Result<Self> {
        stft.validate()?;
        let filterbank = mel_filterbank(&mel, stft.n_bins(), stft.sample_rate)?;
        let fft = FftPlanner::new().plan_fft_forward(stft.window_size);
        Ok(Self {
            stft,
            mel,
            filterbank,
            fft,
        })
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.stft
    }

    pub fn mel_config(&self) -> &MelConfig {
        &self.mel
    }

    /// `n_mels × n_bins` filter weights.
    pub fn filterbank(&self) -> &[f64] {
        &self.filterbank
    }

    /// Mel power (before the logarithm) of one channel, `frames × n_mels`.
    pub fn mel_power(&self, x: &[f32]) -> Vec<f64> {
        let power = stft::power_spectrogram(x, &self.stft, &self.fft);
        let bins = self.stft.n_bins();
        let frames = power.len() / bins;
        let mut out = vec![0.0; frames * self.mel.n_mels];
        gemm(
            frames,
            bins,
            self.mel.n_mels,
            &power,
            false,
            &self.filterbank,
            true,
            &mut out,
            0.0,
        );
        out
    }

    /// `log10(max(mel power, floor))` for every channel.
    pub fn extract(&self, w: &Waveform) -> Result<LogMel> {
        if w.sample_rate() != self.stft.sample_rate {
            return Err(Error::InvalidInput(format!(
                "waveform is at {} Hz but the front-end expects {} Hz",
                w.sample_rate(),
                self.stft.sample_rate
            )));
        }
        let frames = self.stft.n_frames(w.len());
        let floor = self.mel.log_floor;
        let mut data = Vec::with_capacity(w.n_channels() * frames * self.mel.n_mels);
        for c in w.channels() {
            data.extend(
                self.mel_power(c)
                    .into_iter()
                    .map(|p| p.max(floor).log10() as f32),
            );
        }
        LogMel::new(w.n_channels(), frames, self.mel.n_mels, data)
    }
}

/// One-shot log-mel extraction.
pub fn logmel(w: &Waveform, stft: &StftConfig, mel: &MelConfig) -> Result<LogMel> {
    LogMelExtractor::new(*stft, *mel)?.extract(w)
}
