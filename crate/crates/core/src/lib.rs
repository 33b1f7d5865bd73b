//! Machine-listening toolkit: audio ingest, log-mel features, a small CNN autodiff engine,
//! the CNN5/CNN9/CNN13 baselines, and the evaluation metrics used for scene classification,
//! audio tagging, sound event detection and localisation.

pub mod audio;
pub mod error;
pub mod features;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
