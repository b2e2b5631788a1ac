//! Evaluation metrics: class-balanced accuracy and detection
//! precision/recall with greedy IoU matching.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Label;
use crate::geometry::{BoundingBox, Detection};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("balanced accuracy is undefined: class `{0}` has no samples")]
    EmptyClass(Label),
    #[error("{0} is undefined: denominator is zero")]
    Undefined(&'static str),
    #[error("{kind} box {index} has zero area")]
    ZeroArea { kind: &'static str, index: usize },
    #[error("IoU threshold {0} must lie in (0, 1]")]
    Threshold(f64),
    #[error("correct count {correct} exceeds class size {size} for `{label}`")]
    Counts {
        label: Label,
        correct: u64,
        size: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub correct_pass: u64,
    pub size_pass: u64,
    pub correct_other: u64,
    pub size_other: u64,
}

impl ConfusionMatrix {
    pub fn new(
        correct_pass: u64,
        size_pass: u64,
        correct_other: u64,
        size_other: u64,
    ) -> Result<Self, MetricError> {
        let cm = Self {
            correct_pass,
            size_pass,
            correct_other,
            size_other,
        };
        cm.validate()?;
        Ok(cm)
    }

    fn validate(&self) -> Result<(), MetricError> {
        if self.correct_pass > self.size_pass {
            return Err(MetricError::Counts {
                label: Label::Passenger,
                correct: self.correct_pass,
                size: self.size_pass,
            });
        }
        if self.correct_other > self.size_other {
            return Err(MetricError::Counts {
                label: Label::Other,
                correct: self.correct_other,
                size: self.size_other,
            });
        }
        Ok(())
    }

    /// Tallies `(truth, predicted)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Label, Label)>,
    {
        let mut cm = Self::default();
        for (truth, pred) in pairs {
            let hit = u64::from(truth == pred);
            match truth {
                Label::Passenger => {
                    cm.size_pass += 1;
                    cm.correct_pass += hit;
                }
                Label::Other => {
                    cm.size_other += 1;
                    cm.correct_other += hit;
                }
            }
        }
        cm
    }

    pub fn class_accuracy(&self, label: Label) -> Result<f64, MetricError> {
        let (correct, size) = match label {
            Label::Passenger => (self.correct_pass, self.size_pass),
            Label::Other => (self.correct_other, self.size_other),
        };
        if size == 0 {
            return Err(MetricError::EmptyClass(label));
        }
        Ok(correct as f64 / size as f64)
    }
}

/// Mean of the per-class accuracies.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    cm.validate()?;
    let pass = cm.class_accuracy(Label::Passenger)?;
    let other = cm.class_accuracy(Label::Other)?;
    Ok((pass + other) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

impl std::ops::AddAssign for DetectionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_positive += rhs.true_positive;
        self.false_positive += rhs.false_positive;
        self.false_negative += rhs.false_negative;
    }
}

impl DetectionCounts {
    pub fn precision(&self) -> Result<f64, MetricError> {
        let denom = self.true_positive + self.false_positive;
        if denom == 0 {
            return Err(MetricError::Undefined("precision"));
        }
        Ok(self.true_positive as f64 / denom as f64)
    }

    pub fn recall(&self) -> Result<f64, MetricError> {
        let denom = self.true_positive + self.false_negative;
        if denom == 0 {
            return Err(MetricError::Undefined("recall"));
        }
        Ok(self.true_positive as f64 / denom as f64)
    }
}

pub fn detection_pr(c: &DetectionCounts) -> Result<(f64, f64), MetricError> {
    Ok((c.precision()?, c.recall()?))
}

/// Greedy one-to-one matching. Predictions are visited by descending
/// confidence (input order on ties); each takes the unmatched truth box of
/// highest IoU (lowest index on ties) when that IoU reaches `iou_threshold`.
pub fn match_detections(
    preds: &[Detection],
    truth: &[BoundingBox],
    iou_threshold: f64,
) -> Result<DetectionCounts, MetricError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(MetricError::Threshold(iou_threshold));
    }
    if let Some(index) = preds.iter().position(|d| d.bbox.area() <= 0.0) {
        return Err(MetricError::ZeroArea {
            kind: "prediction",
            index,
        });
    }
    if let Some(index) = truth.iter().position(|b| b.area() <= 0.0) {
        return Err(MetricError::ZeroArea {
            kind: "ground-truth",
            index,
        });
    }

    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap_or(Ordering::Equal)
    });

    let mut taken = vec![false; truth.len()];
    let mut tp = 0u64;
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in truth.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = preds[p].bbox.iou(gt);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp += 1;
        }
    }
    Ok(DetectionCounts {
        true_positive: tp,
        false_positive: preds.len() as u64 - tp,
        false_negative: truth.len() as u64 - tp,
    })
}
