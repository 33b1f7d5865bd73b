//! Audio input: WAV decoding, resampling, label handling, segmentation and manifests.

mod labels;
mod manifest;
mod resample;
pub(crate) mod segment;
mod wav;

pub use labels::{
    aggregate_annotations, extract_events, frame_of, rasterize_events, Event, LabelBundle,
    FRAME_RATE,
};
pub use manifest::{load_manifest, ClipRecord, Split, Vocabulary};
pub use resample::{resample, resample_with, ResampleConfig};
pub use segment::{segment_clip, segment_labels, segment_starts, PadPolicy};
pub use wav::{
    decode_wav, encode_wav_pcm16, read_wav_info, write_wav_pcm16, SampleFormat, WavInfo,
};

use crate::error::{Error, Result};

/// Multi-channel audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidInput(
                "waveform needs at least one channel".into(),
            ));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("channels differ in length".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f32>> {
        self.channels
    }

    /// Average of all channels.
    pub fn downmix(&self) -> Waveform {
        if self.channels.len() == 1 {
            return self.clone();
        }
        let k = self.channels.len() as f32;
        let mixed = (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f32>() / k)
            .collect();
        Waveform {
            channels: vec![mixed],
            sample_rate: self.sample_rate,
        }
    }
}
