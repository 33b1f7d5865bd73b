use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::PadPolicy;
use crate::error::{Error, Result};
use crate::features::{MelConfig, StftConfig};
use crate::models::{Arch, HeadKind, ModelSpec};
use crate::nn::PoolKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Single-label scene classification.
    ClipClass,
    /// Multi-label clip tagging.
    ClipTag,
    /// Frame-level event detection.
    FrameSed,
    /// Detection plus direction of arrival.
    Seld,
}

impl TaskKind {
    pub fn head(self) -> HeadKind {
        match self {
            TaskKind::ClipClass => HeadKind::ClipSoftmax,
            TaskKind::ClipTag => HeadKind::ClipSigmoid,
            TaskKind::FrameSed => HeadKind::FrameSigmoid,
            TaskKind::Seld => HeadKind::Seld,
        }
    }

    pub fn is_frame_level(self) -> bool {
        matches!(self, TaskKind::FrameSed | TaskKind::Seld)
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip_class" => Ok(TaskKind::ClipClass),
            "clip_tag" => Ok(TaskKind::ClipTag),
            "frame_sed" => Ok(TaskKind::FrameSed),
            "seld" => Ok(TaskKind::Seld),
            other => Err(Error::Config(format!(
                "unknown task `{other}` (expected clip_class, clip_tag, frame_sed or seld)"
            ))),
        }
    }
}

/// Learning-rate schedule over the configured number of steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero at the last step.
    Cosine,
}

impl LrSchedule {
    /// Multiplier of the base rate at `step` of `steps`.
    pub fn factor(self, step: usize, steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                0.5 * (1.0 + (std::f64::consts::PI * step as f64 / steps as f64).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub pool: PoolKind,
    /// Width of the first block; 64 gives the published networks.
    pub base_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Cnn9,
            pool: PoolKind::Avg,
            base_channels: 64,
        }
    }
}

/// Everything a run depends on besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub model: ModelConfig,
    /// Training segment length; `None` trains on whole clips.
    pub segment_seconds: Option<f64>,
    /// Segment hop; defaults to the segment length.
    pub hop_seconds: Option<f64>,
    pub pad: PadPolicy,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    /// Weight of the localisation term.
    pub lambda: f64,
    pub seed: u64,
    /// Decision threshold on sigmoid outputs.
    pub threshold: f64,
    /// Stop training once the step loss falls below this value.
    pub target_loss: Option<f64>,
    /// Fine-to-coarse class map for coarse AUPRC.
    pub taxonomy: Option<Vec<usize>>,
    pub stft: StftConfig,
    pub mel: MelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::ClipTag,
            model: ModelConfig::default(),
            segment_seconds: None,
            hop_seconds: None,
            pad: PadPolicy::Repeat,
            batch_size: 32,
            steps: 1000,
            lr: 1e-3,
            lr_schedule: LrSchedule::Constant,
            lambda: 1.0,
            seed: 0,
            threshold: 0.5,
            target_loss: None,
            taxonomy: None,
            stft: StftConfig::default(),
            mel: MelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.model.base_channels == 0 {
            return bad("model.base_channels must be positive");
        }
        for v in [self.segment_seconds, self.hop_seconds]
            .into_iter()
            .flatten()
        {
            if !(v > 0.0 && v.is_finite()) {
                return bad("segment and hop lengths must be positive");
            }
        }
        if self.hop_seconds.is_some() && self.segment_seconds.is_none() {
            return bad("hop_seconds needs segment_seconds");
        }
        if self.stft.sample_rate as f64 / self.stft.hop_size as f64 != crate::audio::FRAME_RATE {
            return bad("stft sample_rate / hop_size must equal the 64 fps label rate");
        }
        self.stft.validate()?;
        Ok(())
    }

    pub fn model_spec(&self, in_channels: usize, n_classes: usize) -> ModelSpec {
        ModelSpec::new(
            self.model.arch,
            self.model.pool,
            in_channels,
            n_classes,
            self.task.head(),
        )
        .with_base_channels(self.model.base_channels)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "task = \"seld\"\nsteps = 5\n[model]\narch = \"cnn5\"\npool = \"max\"\nbase_channels = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.task, TaskKind::Seld);
        assert_eq!(cfg.model.arch, Arch::Cnn5);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.fingerprint().len(), 64);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "steps = 0",
            "batch_size = 0",
            "task = \"nope\"",
            "lr = -1.0",
            "bogus = 1",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }
}
