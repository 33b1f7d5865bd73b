//! Evaluation measures for scene classification, tagging, detection and localisation.

mod ranking;
mod sed;
mod seld;

pub use ranking::{
    accuracy_classwise, auprc, average_precision, lwlrap, mean_average_precision, micro_f1,
    Averaging, ClipScores, Counts, Taxonomy,
};
pub use sed::{event_counts, event_f1, segment_metrics, Collar, EventRecord, SegmentStats};
pub use seld::{central_angle, doa_error, frame_recall, seld_score, SeldFrames};
