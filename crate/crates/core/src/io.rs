//! Binary interchange formats. All integers and floats are little-endian.
//!
//! Feature file (`VFV1`):
//! ```text
//! magic "VFV1" | dim u32 | count u32
//! count x { id_len u32 | id utf-8 | layer u8 | dim x f32 }
//! ```
//!
//! Grid file (`VGR1`), records until end of file:
//! ```text
//! magic "VGR1" | S u32 | B u32 | C u32 | width u32 | height u32
//! * { id_len u32 | id utf-8 | S*S*B x (cx, cy, w, h, objectness) f32 | S*S*C x f32 }
//! ```
//! Cells are row-major; boxes of a cell are contiguous.
//!
//! Model file (`VSVM`):
//! ```text
//! magic "VSVM" | version u32 (=1) | dim u32 | layer u8 | dim x weight f64
//! | bias f64 | calibration scale f64 | calibration offset f64
//! | cost f64 | seed u64 | passenger u32 | other u32 | epochs u32
//! ```

use std::path::Path;

use thiserror::Error;

use crate::calibration::Calibration;
use crate::features::{FeatureVector, LayerTag};
use crate::grid::{DecodeError, GridSpec, ProbabilityGrid, RawBox};
use crate::svm::{ClassifierModel, TrainedOn};

pub const FEATURE_MAGIC: [u8; 4] = *b"VFV1";
pub const GRID_MAGIC: [u8; 4] = *b"VGR1";
pub const MODEL_MAGIC: [u8; 4] = *b"VSVM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {format} version {found}, expected {expected}")]
    Version {
        format: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("truncated input: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("non-finite value in record {record} at index {index}")]
    NonFinite { record: usize, index: usize },
    #[error("image id at offset {offset} is not valid UTF-8")]
    InvalidUtf8 { offset: usize },
    #[error("unknown layer tag {tag} at offset {offset}")]
    UnknownTag { offset: usize, tag: u8 },
    #[error("declared {declared} records but the data continues past record {declared} at offset {offset}")]
    TrailingBytes { declared: usize, offset: usize },
    #[error("record `{image_id}` has dimension {found}, file declares {expected}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid grid header: {0}")]
    GridSpec(#[from] DecodeError),
    #[error("record count {0} does not fit the header field")]
    TooMany(usize),
    #[error("invalid model: {0}")]
    Model(#[from] crate::svm::ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize, record: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::TooMany(n))?)?;
        bytes
            .chunks_exact(4)
            .enumerate()
            .map(|(index, c)| {
                let v = f32::from_le_bytes(c.try_into().expect("chunk of 4"));
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(FormatError::NonFinite { record, index })
                }
            })
            .collect()
    }

    fn string(&mut self) -> Result<String, FormatError> {
        let len = self.u32()? as usize;
        let offset = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::InvalidUtf8 { offset })
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found: [u8; 4] = self.array()?;
        // same family, different trailing version digit
        if found[..3] == expected[..3] && found[3].is_ascii_digit() && found != expected {
            return Err(FormatError::Version {
                format: match &expected[..3] {
                    b"VFV" => "feature file",
                    _ => "grid file",
                },
                expected: u32::from(expected[3] - b'0'),
                found: u32::from(found[3] - b'0'),
            });
        }
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&expected).into_owned(),
                found: String::from_utf8_lossy(&found).into_owned(),
            });
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), FormatError> {
    put_u32(
        out,
        u32::try_from(s.len()).map_err(|_| FormatError::TooMany(s.len()))?,
    );
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, vs: impl IntoIterator<Item = f32>) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn count_u32(n: usize) -> Result<u32, FormatError> {
    u32::try_from(n).map_err(|_| FormatError::TooMany(n))
}

/// A batch of feature vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub records: Vec<FeatureVector>,
}

impl FeatureFile {
    pub fn new(dim: usize, records: Vec<FeatureVector>) -> Result<Self, FormatError> {
        if let Some(r) = records.iter().find(|r| r.dim() != dim) {
            return Err(FormatError::DimensionMismatch {
                image_id: r.image_id().to_string(),
                expected: dim,
                found: r.dim(),
            });
        }
        Ok(Self { dim, records })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut out = Vec::with_capacity(12 + self.records.len() * (9 + 4 * self.dim));
        out.extend_from_slice(&FEATURE_MAGIC);
        put_u32(&mut out, count_u32(self.dim)?);
        put_u32(&mut out, count_u32(self.records.len())?);
        for r in &self.records {
            if r.dim() != self.dim {
                return Err(FormatError::DimensionMismatch {
                    image_id: r.image_id().to_string(),
                    expected: self.dim,
                    found: r.dim(),
                });
            }
            put_str(&mut out, r.image_id())?;
            out.push(r.layer().to_byte());
            put_f32s(&mut out, r.values().iter().copied());
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, FormatError> {
        let mut rd = Reader::new(buf);
        rd.magic(FEATURE_MAGIC)?;
        let dim = rd.u32()? as usize;
        let count = rd.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for record in 0..count {
            let image_id = rd.string()?;
            let offset = rd.pos;
            let tag = rd.u8()?;
            let layer =
                LayerTag::from_byte(tag).map_err(|_| FormatError::UnknownTag { offset, tag })?;
            let values = rd.f32s(dim, record)?;
            records
                .push(FeatureVector::new(image_id, layer, values).expect("finite values checked"));
        }
        if rd.remaining() > 0 {
            return Err(FormatError::TrailingBytes {
                declared: count,
                offset: rd.pos,
            });
        }
        Ok(Self { dim, records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub image_id: String,
    pub grid: ProbabilityGrid,
}

/// Probability grids for a batch of images, all sharing one [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub spec: GridSpec,
    pub records: Vec<GridRecord>,
}

impl GridFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let s = &self.spec;
        let mut out = Vec::new();
        out.extend_from_slice(&GRID_MAGIC);
        for v in [
            s.cells_per_side,
            s.boxes_per_cell,
            s.class_count,
            s.image_width,
            s.image_height,
        ] {
            put_u32(&mut out, v);
        }
        for r in &self.records {
            if r.grid.spec != self.spec
                || r.grid.boxes.len() != s.box_count()
                || r.grid.class_probs.len() != s.class_prob_count()
            {
                return Err(FormatError::DimensionMismatch {
                    image_id: r.image_id.clone(),
                    expected: s.box_count() * 5 + s.class_prob_count(),
                    found: r.grid.boxes.len() * 5 + r.grid.class_probs.len(),
                });
            }
            put_str(&mut out, &r.image_id)?;
            put_f32s(
                &mut out,
                r.grid
                    .boxes
                    .iter()
                    .flat_map(|b| [b.cx, b.cy, b.w, b.h, b.objectness]),
            );
            put_f32s(&mut out, r.grid.class_probs.iter().copied());
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, FormatError> {
        let mut rd = Reader::new(buf);
        rd.magic(GRID_MAGIC)?;
        let spec = GridSpec::new(rd.u32()?, rd.u32()?, rd.u32()?, rd.u32()?, rd.u32()?)?;
        let mut records = Vec::new();
        while rd.remaining() > 0 {
            let record = records.len();
            let image_id = rd.string()?;
            let raw = rd.f32s(spec.box_count() * 5, record)?;
            let boxes = raw
                .chunks_exact(5)
                .map(|c| RawBox {
                    cx: c[0],
                    cy: c[1],
                    w: c[2],
                    h: c[3],
                    objectness: c[4],
                })
                .collect();
            let class_probs = rd
                .f32s(spec.class_prob_count(), record)
                .map_err(|e| match e {
                    FormatError::NonFinite { record, index } => FormatError::NonFinite {
                        record,
                        index: index + spec.box_count() * 5,
                    },
                    other => other,
                })?;
            records.push(GridRecord {
                image_id,
                grid: ProbabilityGrid {
                    spec,
                    boxes,
                    class_probs,
                },
            });
        }
        Ok(Self { spec, records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

pub fn model_to_bytes(m: &ClassifierModel) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(64 + 8 * m.dim());
    out.extend_from_slice(&MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    put_u32(&mut out, count_u32(m.dim())?);
    out.push(m.layer().to_byte());
    for w in m.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let cal = m.calibration();
    for v in [m.bias(), cal.scale, cal.offset, m.cost()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let meta = m.trained_on();
    out.extend_from_slice(&meta.seed.to_le_bytes());
    put_u32(&mut out, meta.passenger);
    put_u32(&mut out, meta.other);
    put_u32(&mut out, meta.epochs);
    Ok(out)
}

pub fn model_from_bytes(buf: &[u8]) -> Result<ClassifierModel, FormatError> {
    let mut rd = Reader::new(buf);
    rd.magic(MODEL_MAGIC)?;
    let version = rd.u32()?;
    if version != MODEL_VERSION {
        return Err(FormatError::Version {
            format: "model",
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let dim = rd.u32()? as usize;
    let offset = rd.pos;
    let tag = rd.u8()?;
    let layer = LayerTag::from_byte(tag).map_err(|_| FormatError::UnknownTag { offset, tag })?;
    if rd.remaining() < dim.saturating_mul(8) {
        return Err(FormatError::Truncated {
            offset: rd.pos,
            needed: dim * 8,
            available: rd.remaining(),
        });
    }
    let weights = (0..dim).map(|_| rd.f64()).collect::<Result<Vec<_>, _>>()?;
    let bias = rd.f64()?;
    let calibration = Calibration {
        scale: rd.f64()?,
        offset: rd.f64()?,
    };
    let cost = rd.f64()?;
    let trained_on = TrainedOn {
        seed: rd.u64()?,
        passenger: rd.u32()?,
        other: rd.u32()?,
        epochs: rd.u32()?,
    };
    if rd.remaining() > 0 {
        return Err(FormatError::TrailingBytes {
            declared: 1,
            offset: rd.pos,
        });
    }
    Ok(ClassifierModel::new(
        layer,
        weights,
        bias,
        calibration,
        cost,
        trained_on,
    )?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ClassifierModel, FormatError> {
    model_from_bytes(&std::fs::read(path)?)
}

pub fn write_model(m: &ClassifierModel, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, model_to_bytes(m)?)?;
    Ok(())
}
