//! End-to-end workflow: synthesize or ingest audio, extract features, train, predict, score.

mod config;
mod dataset;
mod evaluate;
mod extract;
mod infer;
mod synth;
mod train;

pub use config::{ExperimentConfig, LrSchedule, ModelConfig, TaskKind};
pub use dataset::{
    segment_example, Example, FeatureDir, FeatureIndex, IndexEntry, Normalization, INDEX_FILE,
    STATS_FILE,
};
pub use evaluate::{evaluate, MetricReport};
pub use extract::extract;
pub use infer::{
    frame_events, infer, predict_clip, predict_frames, FramePrediction, PredictedEvent, RunInfo,
    CLIP_SCORES_FILE, EVENTS_FILE, FRAME_ANGLES_FILE, FRAME_SCORES_FILE, RUN_FILE,
};
pub use synth::{
    class_frequency, class_name, class_signature, synthesize, SynthConfig, SynthDataset,
};
pub use train::{
    fit, load_examples, load_model, log_path, meta_path, train, ModelMeta, TrainSummary,
};
