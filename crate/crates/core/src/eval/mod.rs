//! Evaluation protocols: frame-level ROC with scene splits, clip-level
//! cross-validation, feature ablation and throughput.

mod bench;
mod cv;
mod report;
mod roc;
mod umn;

pub use bench::{bench_throughput, BenchResult, BENCH_WARMUP_FRAMES, MIN_TIMED_FRAMES};
pub use cv::{ablation, clip_cv_protocol, stratified_folds, CvOptions, CvResult, MAX_REFOLDS};
pub use report::{roc_svg, write_folds_csv, write_report_csv, write_roc_csv, EvalReport, Protocol};
pub use roc::{frame_roc, pair_ordering_auc, trapezoid, RocCurve};
pub use umn::{umn_protocol, SceneResult, Split, UmnOptions, UmnResult};

use crate::features::FeatureVector;
use crate::models::Label;

/// Per-frame descriptors of one clip with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub name: String,
    pub scene: String,
    /// Clip-level truth.
    pub label: Label,
    pub frames: Vec<FeatureVector>,
    /// Per-frame truth, same length as `frames`.
    pub frame_labels: Vec<Label>,
}

impl LabeledClip {
    /// A clip whose every frame carries the clip label.
    pub fn uniform(
        name: impl Into<String>,
        scene: impl Into<String>,
        label: Label,
        frames: Vec<FeatureVector>,
    ) -> Self {
        let frame_labels = vec![label; frames.len()];
        Self {
            name: name.into(),
            scene: scene.into(),
            label,
            frames,
            frame_labels,
        }
    }
}
