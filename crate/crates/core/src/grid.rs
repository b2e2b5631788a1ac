//! Decoding of single-shot S×S probability grids into candidate detections.
//!
//! Each cell `(row, col)` carries `B` boxes `(cx, cy, w, h, objectness)` and
//! `C` class probabilities. Box centers are relative to the cell, sizes are
//! relative to the image and stored linearly. Cells are laid out row-major.

use std::cmp::Ordering;

use thiserror::Error;

use crate::geometry::{BoundingBox, Detection};

pub const DEFAULT_CELLS_PER_SIDE: u32 = 11;
pub const DEFAULT_BOXES_PER_CELL: u32 = 2;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("grid spec requires S, B, C >= 1 and positive image size, got S={s} B={b} C={c} image {width}x{height}")]
    Spec {
        s: u32,
        b: u32,
        c: u32,
        width: u32,
        height: u32,
    },
    #[error("expected {expected} boxes for the grid, found {found}")]
    BoxCount { expected: usize, found: usize },
    #[error("expected {expected} class probabilities for the grid, found {found}")]
    ClassCount { expected: usize, found: usize },
    #[error("cell ({row}, {col}) box {index}: field `{field}` = {value} is outside [0, 1]")]
    BoxValue {
        row: usize,
        col: usize,
        index: usize,
        field: &'static str,
        value: f32,
    },
    #[error("cell ({row}, {col}) class {index}: probability {value} is outside [0, 1]")]
    ClassValue {
        row: usize,
        col: usize,
        index: usize,
        value: f32,
    },
    #[error("score threshold {0} is outside [0, 1]")]
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub cells_per_side: u32,
    pub boxes_per_cell: u32,
    pub class_count: u32,
    pub image_width: u32,
    pub image_height: u32,
}

impl GridSpec {
    pub fn new(
        cells_per_side: u32,
        boxes_per_cell: u32,
        class_count: u32,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, DecodeError> {
        let spec = Self {
            cells_per_side,
            boxes_per_cell,
            class_count,
            image_width,
            image_height,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.cells_per_side == 0
            || self.boxes_per_cell == 0
            || self.class_count == 0
            || self.image_width == 0
            || self.image_height == 0
        {
            return Err(DecodeError::Spec {
                s: self.cells_per_side,
                b: self.boxes_per_cell,
                c: self.class_count,
                width: self.image_width,
                height: self.image_height,
            });
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_side as usize * self.cells_per_side as usize
    }

    pub fn box_count(&self) -> usize {
        self.cell_count() * self.boxes_per_cell as usize
    }

    pub fn class_prob_count(&self) -> usize {
        self.cell_count() * self.class_count as usize
    }
}

/// One raw box prediction of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawBox {
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
    pub objectness: f32,
}

impl RawBox {
    pub fn fields(&self) -> [(&'static str, f32); 5] {
        [
            ("cx", self.cx),
            ("cy", self.cy),
            ("w", self.w),
            ("h", self.h),
            ("objectness", self.objectness),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    pub spec: GridSpec,
    /// `S*S*B` boxes, index `(row * S + col) * B + k`.
    pub boxes: Vec<RawBox>,
    /// `S*S*C` probabilities, index `(row * S + col) * C + c`.
    pub class_probs: Vec<f32>,
}

impl ProbabilityGrid {
    /// An all-zero grid for `spec`.
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            boxes: vec![RawBox::default(); spec.box_count()],
            class_probs: vec![0.0; spec.class_prob_count()],
        }
    }

    pub fn cell_box_mut(&mut self, row: usize, col: usize, k: usize) -> &mut RawBox {
        let s = self.spec.cells_per_side as usize;
        let b = self.spec.boxes_per_cell as usize;
        &mut self.boxes[(row * s + col) * b + k]
    }

    pub fn cell_probs_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let s = self.spec.cells_per_side as usize;
        let c = self.spec.class_count as usize;
        let start = (row * s + col) * c;
        &mut self.class_probs[start..start + c]
    }

    /// Checks counts and value ranges.
    pub fn validate(&self) -> Result<(), DecodeError> {
        self.spec.validate()?;
        if self.boxes.len() != self.spec.box_count() {
            return Err(DecodeError::BoxCount {
                expected: self.spec.box_count(),
                found: self.boxes.len(),
            });
        }
        if self.class_probs.len() != self.spec.class_prob_count() {
            return Err(DecodeError::ClassCount {
                expected: self.spec.class_prob_count(),
                found: self.class_probs.len(),
            });
        }
        let s = self.spec.cells_per_side as usize;
        let b = self.spec.boxes_per_cell as usize;
        let c = self.spec.class_count as usize;
        for (i, raw) in self.boxes.iter().enumerate() {
            for (field, value) in raw.fields() {
                if !(0.0..=1.0).contains(&value) {
                    let cell = i / b;
                    return Err(DecodeError::BoxValue {
                        row: cell / s,
                        col: cell % s,
                        index: i % b,
                        field,
                        value,
                    });
                }
            }
        }
        for (i, &value) in self.class_probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                let cell = i / c;
                return Err(DecodeError::ClassValue {
                    row: cell / s,
                    col: cell % s,
                    index: i % c,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Decodes a grid into detections whose score `objectness * max class prob`
/// strictly exceeds `score_threshold`.
///
/// Output is sorted by descending confidence; equal confidences keep grid
/// order (row, column, box index).
pub fn decode(grid: &ProbabilityGrid, score_threshold: f64) -> Result<Vec<Detection>, DecodeError> {
    if !(0.0..=1.0).contains(&score_threshold) {
        return Err(DecodeError::Threshold(score_threshold));
    }
    grid.validate()?;

    let spec = grid.spec;
    let s = spec.cells_per_side as usize;
    let b = spec.boxes_per_cell as usize;
    let c = spec.class_count as usize;
    let width = f64::from(spec.image_width);
    let height = f64::from(spec.image_height);

    let mut out = Vec::new();
    for row in 0..s {
        for col in 0..s {
            let cell = row * s + col;
            let probs = &grid.class_probs[cell * c..(cell + 1) * c];
            // first maximum wins
            let (class_id, class_prob) =
                probs
                    .iter()
                    .enumerate()
                    .fold(
                        (0usize, probs[0]),
                        |best, (i, &p)| {
                            if p > best.1 {
                                (i, p)
                            } else {
                                best
                            }
                        },
                    );

            for raw in &grid.boxes[cell * b..(cell + 1) * b] {
                let score = f64::from(raw.objectness) * f64::from(class_prob);
                if score <= score_threshold {
                    continue;
                }
                let cx = (col as f64 + f64::from(raw.cx)) / s as f64 * width;
                let cy = (row as f64 + f64::from(raw.cy)) / s as f64 * height;
                let w = f64::from(raw.w) * width;
                let h = f64::from(raw.h) * height;
                let bbox = BoundingBox::from_center(cx, cy, w, h)
                    .expect("validated grid values give a well-formed box")
                    .clamp_to(width, height);
                out.push(Detection {
                    bbox,
                    confidence: score,
                    class_id: class_id as u8,
                });
            }
        }
    }

    // stable: ties keep row/col/box order
    out.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
    });
    Ok(out)
}
