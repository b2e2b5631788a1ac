//! Deep feature vectors and labeled samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Activation dimension of a single fully connected layer.
pub const LAYER_DIM: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("feature `{image_id}` has a non-finite value at index {index}")]
    NonFinite { image_id: String, index: usize },
    #[error("cannot concatenate features of different images: `{left}` and `{right}`")]
    ImageMismatch { left: String, right: String },
    #[error("concatenation expects fc6 then fc7, got {left} and {right}")]
    LayerMismatch { left: LayerTag, right: LayerTag },
    #[error("unknown layer tag byte {0}")]
    UnknownTag(u8),
    #[error("unknown layer name `{0}`")]
    UnknownLayerName(String),
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
}

/// Which network layer a vector was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerTag {
    Fc6,
    Fc7,
    Fc6Fc7,
    Other,
}

impl LayerTag {
    pub fn to_byte(self) -> u8 {
        match self {
            LayerTag::Fc6 => 0,
            LayerTag::Fc7 => 1,
            LayerTag::Fc6Fc7 => 2,
            LayerTag::Other => 3,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, FeatureError> {
        Ok(match b {
            0 => LayerTag::Fc6,
            1 => LayerTag::Fc7,
            2 => LayerTag::Fc6Fc7,
            3 => LayerTag::Other,
            other => return Err(FeatureError::UnknownTag(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerTag::Fc6 => "fc6",
            LayerTag::Fc7 => "fc7",
            LayerTag::Fc6Fc7 => "fc6fc7",
            LayerTag::Other => "other",
        }
    }
}

impl std::fmt::Display for LayerTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LayerTag {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fc6" => Ok(LayerTag::Fc6),
            "fc7" => Ok(LayerTag::Fc7),
            "fc6fc7" => Ok(LayerTag::Fc6Fc7),
            "other" => Ok(LayerTag::Other),
            _ => Err(FeatureError::UnknownLayerName(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    image_id: String,
    layer: LayerTag,
    values: Vec<f32>,
}

impl FeatureVector {
    pub fn new(
        image_id: impl Into<String>,
        layer: LayerTag,
        values: Vec<f32>,
    ) -> Result<Self, FeatureError> {
        let image_id = image_id.into();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { image_id, index });
        }
        Ok(Self {
            image_id,
            layer,
            values,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn layer(&self) -> LayerTag {
        self.layer
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Joins an fc6 vector and an fc7 vector of the same image into one
/// `fc6fc7` vector, fc6 values first.
pub fn concat_features(
    a: &FeatureVector,
    b: &FeatureVector,
) -> Result<FeatureVector, FeatureError> {
    if a.layer != LayerTag::Fc6 || b.layer != LayerTag::Fc7 {
        return Err(FeatureError::LayerMismatch {
            left: a.layer,
            right: b.layer,
        });
    }
    if a.image_id != b.image_id {
        return Err(FeatureError::ImageMismatch {
            left: a.image_id.clone(),
            right: b.image_id.clone(),
        });
    }
    let mut values = Vec::with_capacity(a.dim() + b.dim());
    values.extend_from_slice(&a.values);
    values.extend_from_slice(&b.values);
    Ok(FeatureVector {
        image_id: a.image_id.clone(),
        layer: LayerTag::Fc6Fc7,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Passenger,
    Other,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Passenger, Label::Other];

    /// +1 for passenger, -1 for other.
    pub fn sign(self) -> f64 {
        match self {
            Label::Passenger => 1.0,
            Label::Other => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Passenger => 0,
            Label::Other => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Passenger => "passenger",
            Label::Other => "other",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Label {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passenger" => Ok(Label::Passenger),
            "other" => Ok(Label::Other),
            _ => Err(FeatureError::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub feature: FeatureVector,
    pub label: Label,
}

impl LabeledSample {
    pub fn new(feature: FeatureVector, label: Label) -> Self {
        Self { feature, label }
    }

    pub fn image_id(&self) -> &str {
        self.feature.image_id()
    }
}
