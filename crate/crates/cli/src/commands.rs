//! The pipeline commands. Each is a pure function of its input files and
//! configuration; outputs are written in input order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use vehicle_core::io::{read_model, write_model, FeatureFile, GridFile};
use vehicle_core::pipeline::{detect_batch, predict_batch, DetectConfig};
use vehicle_core::{
    concat_features, fuse, match_detections, train, BoundingBox, ConfidenceTable, Confidences,
    ConfusionMatrix, Detection, DetectionCounts, FeatureVector, FilterConfig, ImageGeometry, Label,
    LabeledSample, LayerTag, TrainConfig, ValidRegion,
};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::manifest::{load_manifest, Split, Variant};
use crate::records::{
    read_jsonl, write_file, write_jsonl, ConfidenceRecord, DetectionRecord, LabelRecord,
};

/// Feature vectors from several files, looked up by image id and layer.
#[derive(Debug, Default)]
pub struct FeatureIndex {
    order: Vec<String>,
    by_id: HashMap<String, HashMap<LayerTag, FeatureVector>>,
}

impl FeatureIndex {
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut index = FeatureIndex::default();
        for path in paths {
            let file = FeatureFile::read(path).map_err(|e| CliError::format(path, e))?;
            for v in file.records {
                let id = v.image_id().to_string();
                let layers = index.by_id.entry(id.clone()).or_insert_with(|| {
                    index.order.push(id.clone());
                    HashMap::new()
                });
                if layers.insert(v.layer(), v).is_some() {
                    return Err(CliError::validation(format!(
                        "{}: duplicate feature record for image `{id}`",
                        path.display()
                    )));
                }
            }
        }
        Ok(index)
    }

    /// Ids in order of first appearance.
    pub fn ids(&self) -> &[String] {
        &self.order
    }

    /// The vector for `layer`; `fc6fc7` is assembled from fc6 and fc7 when
    /// no joined record exists.
    pub fn get(&self, id: &str, layer: LayerTag) -> Result<FeatureVector> {
        let layers = self
            .by_id
            .get(id)
            .ok_or_else(|| CliError::validation(format!("no features for image `{id}`")))?;
        if let Some(v) = layers.get(&layer) {
            return Ok(v.clone());
        }
        if layer == LayerTag::Fc6Fc7 {
            if let (Some(a), Some(b)) = (layers.get(&LayerTag::Fc6), layers.get(&LayerTag::Fc7)) {
                return concat_features(a, b).map_err(|e| CliError::validation(e.to_string()));
            }
        }
        Err(CliError::validation(format!(
            "no {layer} features for image `{id}`"
        )))
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::validation(e.to_string())
}

pub fn cmd_detect(grids: &Path, out: &Path, cfg: &Config) -> Result<String> {
    let file = GridFile::read(grids).map_err(|e| CliError::format(grids, e))?;
    let spec = file.spec;
    let region = cfg.region.unwrap_or([
        0.0,
        0.0,
        f64::from(spec.image_width),
        f64::from(spec.image_height),
    ]);
    let region = BoundingBox::try_from(region)
        .and_then(ValidRegion::new)
        .map_err(validation)?;
    let detect = DetectConfig {
        score_threshold: cfg.score_threshold,
        filter: FilterConfig::new(cfg.overlap_threshold, region).map_err(validation)?,
        geometry: ImageGeometry::new(
            spec.image_width,
            spec.image_height,
            cfg.source_width,
            cfg.source_height,
        )
        .map_err(validation)?,
    };
    let results = detect_batch(&file.records, &detect)
        .map_err(|e| CliError::validation(format!("{}: {e}", grids.display())))?;
    let total: usize = results.iter().map(|r| r.detections.len()).sum();
    let records: Vec<DetectionRecord> = results
        .into_iter()
        .map(|r| DetectionRecord {
            image_id: r.image_id,
            detections: r.detections,
        })
        .collect();
    write_jsonl(out, &records)?;
    Ok(format!(
        "kept {total} detections in {} images",
        records.len()
    ))
}

pub struct TrainArgs<'a> {
    pub manifest: &'a Path,
    pub features: &'a [PathBuf],
    pub layer: LayerTag,
    pub variant: Variant,
    pub out: &'a Path,
}

pub fn cmd_train(args: &TrainArgs, cfg: &Config) -> Result<String> {
    let manifest = load_manifest(args.manifest)?;
    let index = FeatureIndex::load(args.features)?;

    // resolve every sample before any computation
    let mut samples = Vec::new();
    for r in manifest.select(Split::Train, args.variant) {
        let label = r.label.ok_or_else(|| {
            CliError::validation(format!("training image `{}` has no label", r.image_id))
        })?;
        samples.push(LabeledSample::new(
            index.get(&r.image_id, args.layer)?,
            label,
        ));
    }
    let trained = train(
        &samples,
        &TrainConfig {
            cost: cfg.cost,
            seed: cfg.seed,
            standardize: cfg.standardize,
            balanced: cfg.balanced,
        },
    )
    .map_err(validation)?;
    write_model(&trained.model, args.out).map_err(|e| CliError::format(args.out, e))?;
    let r = &trained.report;
    Ok(format!(
        "trained on {} samples ({} passenger, {} other), dim {}, {} epochs, dual residual {:.3e}{}",
        samples.len(),
        trained.model.trained_on().passenger,
        trained.model.trained_on().other,
        trained.model.dim(),
        r.epochs,
        r.dual_residual,
        if r.converged {
            ""
        } else {
            " (epoch limit reached)"
        }
    ))
}

pub fn cmd_predict(model: &Path, features: &[PathBuf], out: &Path, cfg: &Config) -> Result<String> {
    let model = read_model(model).map_err(|e| CliError::format(model, e))?;
    let index = FeatureIndex::load(features)?;
    let vectors = index
        .ids()
        .iter()
        .map(|id| index.get(id, model.layer()))
        .collect::<Result<Vec<_>>>()?;
    let confs = predict_batch(&model, &vectors, cfg.confidence_mode).map_err(validation)?;
    let records: Vec<ConfidenceRecord> = vectors
        .iter()
        .zip(confs)
        .map(|(v, c)| ConfidenceRecord {
            image_id: v.image_id().to_string(),
            passenger: c.passenger,
            other: c.other,
        })
        .collect();
    write_jsonl(out, &records)?;
    Ok(format!("predicted {} images", records.len()))
}

fn confidence_map(path: &Path) -> Result<(Vec<String>, HashMap<String, Confidences>)> {
    let records: Vec<ConfidenceRecord> = read_jsonl(path)?;
    let mut order = Vec::with_capacity(records.len());
    let mut map = HashMap::with_capacity(records.len());
    for r in records {
        let c = Confidences {
            passenger: r.passenger,
            other: r.other,
        };
        if map.insert(r.image_id.clone(), c).is_some() {
            return Err(CliError::validation(format!(
                "{}: duplicate image `{}`",
                path.display(),
                r.image_id
            )));
        }
        order.push(r.image_id);
    }
    Ok((order, map))
}

pub fn cmd_fuse(original: &Path, transformed: &Path, out: &Path) -> Result<String> {
    let (order, orig) = confidence_map(original)?;
    let (_, trans) = confidence_map(transformed)?;
    if let Some(id) = trans.keys().find(|id| !orig.contains_key(*id)) {
        return Err(CliError::validation(format!(
            "image `{id}` is in {} but not in {}",
            transformed.display(),
            original.display()
        )));
    }
    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let t = trans.get(&id).ok_or_else(|| {
            CliError::validation(format!(
                "image `{id}` is in {} but not in {}",
                original.display(),
                transformed.display()
            ))
        })?;
        let table = ConfidenceTable::new(orig[&id], *t)
            .map_err(|e| CliError::validation(format!("image `{id}`: {e}")))?;
        let fused = fuse(&table);
        records.push(LabelRecord {
            confidence: table.get(fused.label, fused.source),
            image_id: id,
            label: fused.label,
            source: fused.source,
        });
    }
    write_jsonl(out, &records)?;
    Ok(format!("fused {} images", records.len()))
}

pub struct EvalArgs<'a> {
    pub manifest: &'a Path,
    pub detections: Option<&'a Path>,
    pub labels: Option<&'a Path>,
    pub confidences: Option<&'a Path>,
    pub split: Split,
    pub variant: Variant,
    pub json: Option<&'a Path>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub images: usize,
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl DetectionSummary {
    pub fn from_counts(images: usize, c: DetectionCounts) -> Self {
        Self {
            images,
            true_positive: c.true_positive,
            false_positive: c.false_positive,
            false_negative: c.false_negative,
            precision: c.precision().ok(),
            recall: c.recall().ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationSummary {
    pub correct_passenger: u64,
    pub size_passenger: u64,
    pub correct_other: u64,
    pub size_other: u64,
    pub accuracy_passenger: Option<f64>,
    pub accuracy_other: Option<f64>,
    pub balanced_accuracy: Option<f64>,
}

impl ClassificationSummary {
    pub fn from_matrix(cm: &ConfusionMatrix) -> Self {
        Self {
            correct_passenger: cm.correct_pass,
            size_passenger: cm.size_pass,
            correct_other: cm.correct_other,
            size_other: cm.size_other,
            accuracy_passenger: cm.class_accuracy(Label::Passenger).ok(),
            accuracy_other: cm.class_accuracy(Label::Other).ok(),
            balanced_accuracy: vehicle_core::balanced_accuracy(cm).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResults {
    pub detection: Option<DetectionSummary>,
    pub classification: Option<ClassificationSummary>,
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.1}%", v * 100.0),
        None => "n/a".to_string(),
    }
}

impl EvalResults {
    /// Human-readable report, one metric per line.
    pub fn report(&self) -> String {
        let mut lines = Vec::new();
        if let Some(d) = &self.detection {
            lines.push(format!("detection images {}", d.images));
            lines.push(format!("true_positive {}", d.true_positive));
            lines.push(format!("false_positive {}", d.false_positive));
            lines.push(format!("false_negative {}", d.false_negative));
            lines.push(format!("precision {}", pct(d.precision)));
            lines.push(format!("recall {}", pct(d.recall)));
        }
        if let Some(c) = &self.classification {
            lines.push(format!(
                "accuracy passenger {} ({}/{})",
                pct(c.accuracy_passenger),
                c.correct_passenger,
                c.size_passenger
            ));
            lines.push(format!(
                "accuracy other {} ({}/{})",
                pct(c.accuracy_other),
                c.correct_other,
                c.size_other
            ));
            lines.push(format!("balanced accuracy {}", pct(c.balanced_accuracy)));
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}

pub fn cmd_eval(args: &EvalArgs, cfg: &Config) -> Result<EvalResults> {
    if args.detections.is_none() && args.labels.is_none() && args.confidences.is_none() {
        return Err(CliError::validation(
            "eval needs at least one of --detections, --labels or --confidences",
        ));
    }
    if args.labels.is_some() && args.confidences.is_some() {
        return Err(CliError::validation(
            "pass either --labels or --confidences, not both",
        ));
    }
    let manifest = load_manifest(args.manifest)?;
    let selected: Vec<_> = manifest.select(args.split, args.variant).collect();
    // ids from other splits or variants are skipped; ids unknown to the
    // manifest are an error
    let known: HashSet<&str> = manifest
        .records
        .iter()
        .map(|r| r.image_id.as_str())
        .collect();
    let unknown = |path: &Path, id: &str| {
        CliError::validation(format!(
            "{}: image `{id}` is not in the manifest",
            path.display()
        ))
    };

    let detection = match args.detections {
        None => None,
        Some(path) => {
            let truth: BTreeMap<&str, &Vec<BoundingBox>> = selected
                .iter()
                .filter_map(|r| r.boxes.as_ref().map(|b| (r.image_id.as_str(), b)))
                .collect();
            let mut preds: HashMap<String, Vec<Detection>> = HashMap::new();
            for r in read_jsonl::<DetectionRecord>(path)? {
                if !known.contains(r.image_id.as_str()) {
                    return Err(unknown(path, &r.image_id));
                }
                if !truth.contains_key(r.image_id.as_str()) {
                    continue;
                }
                if preds.insert(r.image_id.clone(), r.detections).is_some() {
                    return Err(CliError::validation(format!(
                        "{}: duplicate image `{}`",
                        path.display(),
                        r.image_id
                    )));
                }
            }
            let mut counts = DetectionCounts::default();
            for (id, boxes) in &truth {
                let p = preds.get(*id).map(Vec::as_slice).unwrap_or(&[]);
                counts += match_detections(p, boxes, cfg.iou_threshold)
                    .map_err(|e| CliError::validation(format!("image `{id}`: {e}")))?;
            }
            Some(DetectionSummary::from_counts(truth.len(), counts))
        }
    };

    let predicted: Option<(PathBuf, HashMap<String, Label>)> = if let Some(p) = args.labels {
        let map = read_jsonl::<LabelRecord>(p)?
            .into_iter()
            .map(|r| (r.image_id, r.label))
            .collect();
        Some((p.to_path_buf(), map))
    } else if let Some(p) = args.confidences {
        let map = read_jsonl::<ConfidenceRecord>(p)?
            .into_iter()
            .map(|r| {
                let c = Confidences {
                    passenger: r.passenger,
                    other: r.other,
                };
                (r.image_id, c.label())
            })
            .collect();
        Some((p.to_path_buf(), map))
    } else {
        None
    };

    let classification = match predicted {
        None => None,
        Some((path, map)) => {
            let truth: Vec<(&str, Label)> = selected
                .iter()
                .filter_map(|r| r.label.map(|l| (r.image_id.as_str(), l)))
                .collect();
            if let Some(id) = map.keys().find(|id| !known.contains(id.as_str())) {
                return Err(unknown(&path, id));
            }
            let mut pairs = Vec::with_capacity(truth.len());
            for (id, t) in truth {
                let p = map.get(id).ok_or_else(|| {
                    CliError::validation(format!(
                        "{}: no prediction for labeled image `{id}`",
                        path.display()
                    ))
                })?;
                pairs.push((t, *p));
            }
            Some(ClassificationSummary::from_matrix(
                &ConfusionMatrix::from_pairs(pairs),
            ))
        }
    };

    let results = EvalResults {
        detection,
        classification,
    };
    if let Some(p) = args.json {
        let mut bytes = serde_json::to_vec_pretty(&results).expect("results serialize");
        bytes.push(b'\n');
        write_file(p, &bytes)?;
    }
    Ok(results)
}
