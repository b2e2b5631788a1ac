//! Late fusion of classifier confidences from a dark image and its
//! transformed counterpart.
//!
//! The fused label is the class of the single most confident
//! (class, source) entry. Ties go to the original source first, then to
//! passenger.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Label;
use crate::svm::Confidences;

/// Per-source normalization tolerance.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("confidence for {label} from {source_kind} is {value}, outside [0, 1]")]
    OutOfRange {
        label: Label,
        source_kind: Source,
        value: f64,
    },
    #[error("confidences from {source_kind} sum to {sum}, not 1")]
    NotNormalized { source_kind: Source, sum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Original,
    Transformed,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Original, Source::Transformed];

    fn index(self) -> usize {
        match self {
            Source::Original => 0,
            Source::Transformed => 1,
        }
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::Original => "original",
            Source::Transformed => "transformed",
        })
    }
}

/// `conf[class][source]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceTable {
    conf: [[f64; 2]; 2],
}

impl ConfidenceTable {
    pub fn new(original: Confidences, transformed: Confidences) -> Result<Self, FusionError> {
        let table = Self {
            conf: [
                [original.passenger, transformed.passenger],
                [original.other, transformed.other],
            ],
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), FusionError> {
        for source in Source::ALL {
            for label in Label::ALL {
                let value = self.get(label, source);
                if !(0.0..=1.0).contains(&value) {
                    return Err(FusionError::OutOfRange {
                        label,
                        source_kind: source,
                        value,
                    });
                }
            }
            let sum = self.get(Label::Passenger, source) + self.get(Label::Other, source);
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(FusionError::NotNormalized {
                    source_kind: source,
                    sum,
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, label: Label, source: Source) -> f64 {
        self.conf[label.index()][source.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fused {
    pub label: Label,
    pub source: Source,
}

/// Argmax over all four (class, source) entries.
pub fn fuse(t: &ConfidenceTable) -> Fused {
    let mut best = Fused {
        label: Label::Passenger,
        source: Source::Original,
    };
    let mut best_value = f64::NEG_INFINITY;
    for source in Source::ALL {
        for label in Label::ALL {
            let v = t.get(label, source);
            if v > best_value {
                best_value = v;
                best = Fused { label, source };
            }
        }
    }
    best
}

/// Alternative reading: take each class's best confidence over the sources,
/// then the best class. A tie between classes goes to the class whose best
/// came from the earlier source, then to passenger, so both readings share
/// one tie-break.
pub fn fuse_per_class_max(t: &ConfidenceTable) -> Label {
    let best_of = |label: Label| {
        Source::ALL.iter().map(|&s| (t.get(label, s), s)).fold(
            (f64::NEG_INFINITY, Source::Original),
            |acc, cur| {
                if cur.0 > acc.0 {
                    cur
                } else {
                    acc
                }
            },
        )
    };
    let (vp, sp) = best_of(Label::Passenger);
    let (vo, so) = best_of(Label::Other);
    if vo > vp || (vo == vp && so < sp) {
        Label::Other
    } else {
        Label::Passenger
    }
}
