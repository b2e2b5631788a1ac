//! Per-image stages composed over whole batches.
//!
//! With the `parallel` feature (on by default) batches fan out over rayon's
//! pool; without it they run on the calling thread. Either way results come
//! back in input order and are identical, since each image is processed
//! independently. The `*_sequential` variants always run on one thread.

use thiserror::Error;

use crate::features::FeatureVector;
use crate::filter::{filter_detections, FilterConfig, FilterError};
use crate::geometry::{Detection, ImageGeometry};
use crate::grid::{decode, DecodeError, ProbabilityGrid};
use crate::io::GridRecord;
use crate::svm::{predict_confidence, ClassifierModel, ConfidenceMode, Confidences, PredictError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Error for one image of a batch.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("image `{image_id}`: {error}")]
pub struct BatchError<E: std::error::Error> {
    pub image_id: String,
    pub error: E,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub score_threshold: f64,
    /// Region and threshold in detection-resolution pixels.
    pub filter: FilterConfig,
    pub geometry: ImageGeometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub image_id: String,
    /// Kept detections in source-image pixels, descending confidence.
    pub detections: Vec<Detection>,
}

/// Decode, drop invalid detections, then map survivors to source pixels.
pub fn detect_image(
    grid: &ProbabilityGrid,
    cfg: &DetectConfig,
) -> Result<Vec<Detection>, DetectError> {
    let candidates = decode(grid, cfg.score_threshold)?;
    let kept = filter_detections(&candidates, &cfg.filter)?;
    Ok(kept
        .into_iter()
        .map(|d| Detection {
            bbox: cfg.geometry.map_to_source(&d.bbox),
            ..d
        })
        .collect())
}

fn detect_record(
    r: &GridRecord,
    cfg: &DetectConfig,
) -> Result<ImageDetections, BatchError<DetectError>> {
    detect_image(&r.grid, cfg)
        .map(|detections| ImageDetections {
            image_id: r.image_id.clone(),
            detections,
        })
        .map_err(|error| BatchError {
            image_id: r.image_id.clone(),
            error,
        })
}

#[cfg(feature = "parallel")]
pub fn detect_batch(
    records: &[GridRecord],
    cfg: &DetectConfig,
) -> Result<Vec<ImageDetections>, BatchError<DetectError>> {
    use rayon::prelude::*;
    records.par_iter().map(|r| detect_record(r, cfg)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn detect_batch(
    records: &[GridRecord],
    cfg: &DetectConfig,
) -> Result<Vec<ImageDetections>, BatchError<DetectError>> {
    detect_batch_sequential(records, cfg)
}

pub fn detect_batch_sequential(
    records: &[GridRecord],
    cfg: &DetectConfig,
) -> Result<Vec<ImageDetections>, BatchError<DetectError>> {
    records.iter().map(|r| detect_record(r, cfg)).collect()
}

fn predict_one(
    model: &ClassifierModel,
    f: &FeatureVector,
    mode: ConfidenceMode,
) -> Result<Confidences, BatchError<PredictError>> {
    predict_confidence(model, f, mode).map_err(|error| BatchError {
        image_id: f.image_id().to_string(),
        error,
    })
}

#[cfg(feature = "parallel")]
pub fn predict_batch(
    model: &ClassifierModel,
    features: &[FeatureVector],
    mode: ConfidenceMode,
) -> Result<Vec<Confidences>, BatchError<PredictError>> {
    use rayon::prelude::*;
    features
        .par_iter()
        .map(|f| predict_one(model, f, mode))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn predict_batch(
    model: &ClassifierModel,
    features: &[FeatureVector],
    mode: ConfidenceMode,
) -> Result<Vec<Confidences>, BatchError<PredictError>> {
    predict_batch_sequential(model, features, mode)
}

pub fn predict_batch_sequential(
    model: &ClassifierModel,
    features: &[FeatureVector],
    mode: ConfidenceMode,
) -> Result<Vec<Confidences>, BatchError<PredictError>> {
    features
        .iter()
        .map(|f| predict_one(model, f, mode))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, ValidRegion};
    use crate::grid::GridSpec;
    use crate::svm::{train, TrainConfig};
    use crate::synthetic::{gaussian_clusters, random_grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> DetectConfig {
        let region = ValidRegion::new(BoundingBox::new(0., 100., 448., 333.).unwrap()).unwrap();
        DetectConfig {
            score_threshold: 0.2,
            filter: FilterConfig::new(0.5, region).unwrap(),
            geometry: ImageGeometry::new(448, 333, 4184, 3108).unwrap(),
        }
    }

    fn records(n: usize) -> Vec<GridRecord> {
        let spec = GridSpec::new(11, 2, 1, 448, 333).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..n)
            .map(|i| GridRecord {
                image_id: format!("r{i}"),
                grid: random_grid(&mut rng, spec, 0.1),
            })
            .collect()
    }

    #[test]
    fn batch_matches_sequential() {
        let recs = records(40);
        let cfg = config();
        let a = detect_batch(&recs, &cfg).unwrap();
        let b = detect_batch_sequential(&recs, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.iter().map(|d| d.image_id.as_str()).collect::<Vec<_>>(),
            recs.iter().map(|r| r.image_id.as_str()).collect::<Vec<_>>()
        );
        for img in &a {
            for d in &img.detections {
                assert!(d.bbox.x_max() <= 4184.0 && d.bbox.y_max() <= 3108.0);
            }
        }
    }

    #[test]
    fn batch_error_names_the_image() {
        let mut recs = records(3);
        recs[1].grid.boxes[0].w = 2.0;
        let err = detect_batch(&recs, &config()).unwrap_err();
        assert_eq!(err.image_id, "r1");
    }

    #[test]
    fn predict_batch_matches_sequential() {
        let data = gaussian_clusters(20, 16, 3.0, 0.5, 1);
        let model = train(&data, &TrainConfig::default()).unwrap().model;
        let feats: Vec<_> = data.iter().map(|s| s.feature.clone()).collect();
        let a = predict_batch(&model, &feats, ConfidenceMode::Calibrated).unwrap();
        let b = predict_batch_sequential(&model, &feats, ConfidenceMode::Calibrated).unwrap();
        assert_eq!(a, b);
    }
}
