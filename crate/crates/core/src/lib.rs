//! Post-inference logic for image-based vehicle detection and
//! classification.
//!
//! Network inference happens elsewhere; this crate consumes its outputs
//! (probability grids and deep feature vectors) and provides:
//!
//! - [`grid`]: decoding of S×S detector grids into scored boxes,
//! - [`filter`]: removal of overlapping and out-of-region detections,
//! - [`svm`] and [`calibration`]: a linear SVM with calibrated confidences,
//! - [`fusion`]: late fusion of dark and transformed image predictions,
//! - [`metrics`]: balanced accuracy and detection precision/recall,
//! - [`io`]: the binary feature, grid and model file formats,
//! - [`pipeline`]: batch composition of the above, parallel by default.

pub mod calibration;
pub mod features;
pub mod filter;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod svm;
pub mod synthetic;

pub use features::{concat_features, FeatureVector, Label, LabeledSample, LayerTag};
pub use filter::{filter_detections, FilterConfig};
pub use fusion::{fuse, ConfidenceTable, Fused, Source};
pub use geometry::{BoundingBox, Detection, ImageGeometry, Point, ValidRegion};
pub use grid::{decode, GridSpec, ProbabilityGrid};
pub use metrics::{
    balanced_accuracy, detection_pr, match_detections, ConfusionMatrix, DetectionCounts,
};
pub use svm::{
    predict_confidence, predict_label, train, ClassifierModel, ConfidenceMode, Confidences,
    TrainConfig,
};
