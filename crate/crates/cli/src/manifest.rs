//! Dataset manifests: one JSON object per line describing an image.
//!
//! ```json
//! {"image_id": "IMG_0001", "split": "test", "variant": "normal",
//!  "label": "passenger", "boxes": [[10, 20, 110, 90]],
//!  "grids": "grids.vgr", "features": ["fc6.vfv", "fc7.vfv"]}
//! ```
//!
//! `label`, `boxes`, `grids` and `features` are optional. File references
//! are resolved against the manifest's directory, and every referenced file
//! must contain a record for the image.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vehicle_core::io::{FeatureFile, GridFile};
use vehicle_core::{BoundingBox, Label};

use crate::error::{CliError, Result};
use crate::records::read_jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Normal,
    Dark,
    Transformed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image_id: String,
    pub split: Split,
    pub variant: Variant,
    #[serde(default)]
    pub label: Option<Label>,
    /// Ground-truth boxes in source-image pixels.
    #[serde(default)]
    pub boxes: Option<Vec<BoundingBox>>,
    #[serde(default)]
    pub grids: Option<PathBuf>,
    #[serde(default)]
    pub features: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn select(&self, split: Split, variant: Variant) -> impl Iterator<Item = &ManifestRecord> {
        self.records
            .iter()
            .filter(move |r| r.split == split && r.variant == variant)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parses a manifest and checks referential integrity before returning.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut records: Vec<ManifestRecord> = read_jsonl(path)?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert((r.split, r.variant, r.image_id.as_str())) {
            return Err(CliError::validation(format!(
                "{}: duplicate image id `{}` in split {:?} variant {:?}",
                path.display(),
                r.image_id,
                r.split,
                r.variant
            )));
        }
    }

    for r in &mut records {
        if let Some(g) = r.grids.as_mut() {
            *g = base.join(&*g);
        }
        for f in &mut r.features {
            *f = base.join(&*f);
        }
    }

    // file -> ids it contains; each file is read once
    let mut grid_ids: BTreeMap<PathBuf, HashSet<String>> = BTreeMap::new();
    let mut feature_ids: HashMap<PathBuf, HashSet<String>> = HashMap::new();
    for r in &records {
        if let Some(g) = &r.grids {
            if !grid_ids.contains_key(g) {
                let file = read_existing(g, |p| GridFile::read(p))?;
                grid_ids.insert(
                    g.clone(),
                    file.records.into_iter().map(|r| r.image_id).collect(),
                );
            }
            if !grid_ids[g].contains(&r.image_id) {
                return Err(missing(path, &r.image_id, g));
            }
        }
        for f in &r.features {
            if !feature_ids.contains_key(f) {
                let file = read_existing(f, |p| FeatureFile::read(p))?;
                feature_ids.insert(
                    f.clone(),
                    file.records
                        .iter()
                        .map(|v| v.image_id().to_string())
                        .collect(),
                );
            }
            if !feature_ids[f].contains(&r.image_id) {
                return Err(missing(path, &r.image_id, f));
            }
        }
    }
    Ok(DatasetManifest { records })
}

fn read_existing<T>(
    path: &Path,
    read: impl Fn(&Path) -> std::result::Result<T, vehicle_core::io::FormatError>,
) -> Result<T> {
    if !path.is_file() {
        return Err(CliError::validation(format!(
            "referenced file {} does not exist",
            path.display()
        )));
    }
    read(path).map_err(|e| CliError::format(path, e))
}

fn missing(manifest: &Path, id: &str, file: &Path) -> CliError {
    CliError::validation(format!(
        "{}: image `{id}` references {} but that file has no record for it",
        manifest.display(),
        file.display()
    ))
}

/// Ground-truth labels by image id.
pub fn labels(
    records: impl IntoIterator<Item = impl std::borrow::Borrow<ManifestRecord>>,
) -> Vec<(String, Label)> {
    records
        .into_iter()
        .filter_map(|r| {
            let r = r.borrow();
            r.label.map(|l| (r.image_id.clone(), l))
        })
        .collect()
}
