//! Axis-aligned box geometry and the detection data model shared by every
//! pipeline stage.
//!
//! Boxes are stored as corner pairs in pixel coordinates. Fractional pixels
//! are allowed; all arithmetic is done in `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box corners are not finite: ({0}, {1}, {2}, {3})")]
    NonFinite(f64, f64, f64, f64),
    #[error(
        "box corners are inverted: x_min={x_min} > x_max={x_max} or y_min={y_min} > y_max={y_max}"
    )]
    Inverted {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("confidence {0} is outside [0, 1]")]
    Confidence(f64),
    #[error("valid region must have positive area")]
    DegenerateRegion,
    #[error("image dimensions must be positive, got detect {detect_width}x{detect_height}, source {source_width}x{source_height}")]
    ImageDims {
        detect_width: u32,
        detect_height: u32,
        source_width: u32,
        source_height: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned rectangle, `x_min <= x_max` and `y_min <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if !(x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite()) {
            return Err(GeometryError::NonFinite(x_min, y_min, x_max, y_max));
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::Inverted {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from its center and size. Negative sizes are an error.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    #[inline]
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    #[inline]
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() == 0.0
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Overlap area with `other`; 0 when disjoint or touching.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union. Two degenerate boxes have IoU 0.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clamps the box into `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> BoundingBox {
        let cx = |v: f64| v.clamp(0.0, width);
        let cy = |v: f64| v.clamp(0.0, height);
        BoundingBox {
            x_min: cx(self.x_min),
            y_min: cy(self.y_min),
            x_max: cx(self.x_max),
            y_max: cy(self.y_max),
        }
    }

    /// Multiplies x coordinates by `sx` and y coordinates by `sy` (both positive).
    pub fn scale(&self, sx: f64, sy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min * sx,
            y_min: self.y_min * sy,
            x_max: self.x_max * sx,
            y_max: self.y_max * sy,
        }
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.corners()
    }
}

pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.intersection_area(b)
}

pub fn center(b: &BoundingBox) -> Point {
    b.center()
}

/// A scored box produced by the detector. `class_id` 0 is passenger (or the
/// single detection class), 1 is other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_id: u8,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64, class_id: u8) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::Confidence(confidence));
        }
        Ok(Self {
            bbox,
            confidence,
            class_id,
        })
    }
}

/// The selected road region. A detection is valid only when its center lies
/// inside; the boundary counts as inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidRegion {
    region: BoundingBox,
}

impl ValidRegion {
    pub fn new(region: BoundingBox) -> Result<Self, GeometryError> {
        if region.width() <= 0.0 || region.height() <= 0.0 {
            return Err(GeometryError::DegenerateRegion);
        }
        Ok(Self { region })
    }

    pub fn bounds(&self) -> &BoundingBox {
        &self.region
    }

    pub fn contains(&self, p: Point) -> bool {
        let r = &self.region;
        r.x_min <= p.x && p.x <= r.x_max && r.y_min <= p.y && p.y <= r.y_max
    }
}

pub fn contains(r: &ValidRegion, p: Point) -> bool {
    r.contains(p)
}

/// Resolution the detector ran at versus the resolution of the original
/// road image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    detect_width: u32,
    detect_height: u32,
    source_width: u32,
    source_height: u32,
}

impl ImageGeometry {
    pub fn new(
        detect_width: u32,
        detect_height: u32,
        source_width: u32,
        source_height: u32,
    ) -> Result<Self, GeometryError> {
        if detect_width == 0 || detect_height == 0 || source_width == 0 || source_height == 0 {
            return Err(GeometryError::ImageDims {
                detect_width,
                detect_height,
                source_width,
                source_height,
            });
        }
        Ok(Self {
            detect_width,
            detect_height,
            source_width,
            source_height,
        })
    }

    pub fn detect_size(&self) -> (u32, u32) {
        (self.detect_width, self.detect_height)
    }

    pub fn source_size(&self) -> (u32, u32) {
        (self.source_width, self.source_height)
    }

    fn scale_x(&self) -> f64 {
        f64::from(self.source_width) / f64::from(self.detect_width)
    }

    fn scale_y(&self) -> f64 {
        f64::from(self.source_height) / f64::from(self.detect_height)
    }

    /// Scales a detection-resolution box to source resolution without
    /// clamping.
    pub fn scale_to_source(&self, b: &BoundingBox) -> BoundingBox {
        b.scale(self.scale_x(), self.scale_y())
    }

    /// Maps a detection-resolution box into source-image pixels, clamped to
    /// the source image so crops never index outside it.
    pub fn map_to_source(&self, b: &BoundingBox) -> BoundingBox {
        self.scale_to_source(b)
            .clamp_to(f64::from(self.source_width), f64::from(self.source_height))
    }

    /// Inverse of [`Self::scale_to_source`].
    pub fn map_to_detect(&self, b: &BoundingBox) -> BoundingBox {
        b.scale(1.0 / self.scale_x(), 1.0 / self.scale_y())
    }
}

pub fn map_to_source(b: &BoundingBox, g: &ImageGeometry) -> BoundingBox {
    g.map_to_source(b)
}
