//! Synthetic dataset shared by the CLI tests: grids, fc6/fc7 features and a
//! manifest for a small population of images, plus the detection counts
//! the construction implies.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vehicle_core::grid::RawBox;
use vehicle_core::io::{FeatureFile, GridFile, GridRecord};
use vehicle_core::synthetic::normal;
use vehicle_core::{FeatureVector, GridSpec, Label, LayerTag, ProbabilityGrid};

pub const DETECT_W: u32 = 448;
pub const DETECT_H: u32 = 333;
pub const SOURCE_W: u32 = 4184;
pub const SOURCE_H: u32 = 3108;
pub const FEATURE_DIM: usize = 32;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vehicle"))
}

/// Runs the binary with `VEHICLE_CONFIG` cleared.
pub fn run(args: &[&str]) -> Output {
    bin()
        .env_remove("VEHICLE_CONFIG")
        .args(args)
        .output()
        .expect("spawn vehicle")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "vehicle {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Expected {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

#[derive(Debug)]
pub struct Fixture {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub grids: PathBuf,
    pub train_features: Vec<PathBuf>,
    pub test_features: Vec<PathBuf>,
    pub transformed_features: Vec<PathBuf>,
    pub labels: Vec<(String, Label)>,
    /// Detection counts over the test split at IoU 0.5.
    pub expected: Expected,
}

/// Object anchor cells, far enough apart that boxes never overlap.
const ANCHORS: [(usize, usize); 9] = [
    (1, 1),
    (1, 5),
    (1, 9),
    (5, 1),
    (5, 5),
    (5, 9),
    (9, 1),
    (9, 5),
    (9, 9),
];

fn source_box(row: usize, col: usize, b: &RawBox) -> [f64; 4] {
    let s = 11.0;
    let (w, h) = (f64::from(DETECT_W), f64::from(DETECT_H));
    let cx = (col as f64 + f64::from(b.cx)) / s * w;
    let cy = (row as f64 + f64::from(b.cy)) / s * h;
    let (bw, bh) = (f64::from(b.w) * w, f64::from(b.h) * h);
    let sx = f64::from(SOURCE_W) / w;
    let sy = f64::from(SOURCE_H) / h;
    [
        (cx - bw / 2.0) * sx,
        (cy - bh / 2.0) * sy,
        (cx + bw / 2.0) * sx,
        (cy + bh / 2.0) * sy,
    ]
}

fn features(
    rng: &mut ChaCha8Rng,
    id: &str,
    layer: LayerTag,
    label: Label,
    shift: f64,
) -> FeatureVector {
    let values = (0..FEATURE_DIM)
        .map(|k| {
            let mean = if k < 2 {
                label.sign() * 1.5 + shift
            } else {
                0.0
            };
            (mean + 0.5 * normal(rng)) as f32
        })
        .collect();
    FeatureVector::new(id, layer, values).expect("finite")
}

/// Writes an `n`-image dataset into `dir`. The first 60% of images form
/// the train split, the rest the test split; test images also get a
/// `transformed` variant with shifted features.
pub fn build(dir: &Path, n: usize) -> Fixture {
    let spec = GridSpec::new(11, 2, 1, DETECT_W, DETECT_H).unwrap();
    let n_train = n * 3 / 5;
    let mut grids = Vec::new();
    let mut manifest = String::new();
    let mut labels = Vec::new();
    let mut expected = Expected::default();
    let (mut train6, mut train7, mut test6, mut test7, mut tr6, mut tr7) =
        (vec![], vec![], vec![], vec![], vec![], vec![]);

    for i in 0..n {
        let id = format!("IMG_{i:04}");
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let label = if i % 2 == 0 {
            Label::Passenger
        } else {
            Label::Other
        };
        let is_test = i >= n_train;

        let mut grid = ProbabilityGrid::zeros(spec);
        let mut anchors = ANCHORS.to_vec();
        anchors.shuffle(&mut rng);
        let objects = 1 + i % 3;
        let mut truth = Vec::new();
        for &(row, col) in &anchors[..objects] {
            let b = RawBox {
                cx: rng.gen_range(0.3..0.7),
                cy: rng.gen_range(0.3..0.7),
                w: rng.gen_range(0.08..0.15),
                h: rng.gen_range(0.08..0.15),
                objectness: rng.gen_range(0.6..0.95),
            };
            *grid.cell_box_mut(row, col, 0) = b;
            // a smaller, weaker box inside the first: removed by the filter
            *grid.cell_box_mut(row, col, 1) = RawBox {
                w: b.w * 0.6,
                h: b.h * 0.6,
                objectness: 0.4,
                ..b
            };
            grid.cell_probs_mut(row, col)[0] = rng.gen_range(0.75..1.0);
            truth.push(source_box(row, col, &b));
        }
        // a false positive without ground truth
        if i % 4 == 3 {
            let (row, col) = anchors[objects];
            *grid.cell_box_mut(row, col, 0) = RawBox {
                cx: 0.5,
                cy: 0.5,
                w: 0.1,
                h: 0.1,
                objectness: 0.5,
            };
            grid.cell_probs_mut(row, col)[0] = 0.9;
            expected.false_positive += u64::from(is_test);
        }
        // a missed object: ground truth without grid evidence
        if i % 5 == 0 {
            let (row, col) = anchors[objects + 1];
            truth.push(source_box(
                row,
                col,
                &RawBox {
                    cx: 0.5,
                    cy: 0.5,
                    w: 0.12,
                    h: 0.12,
                    objectness: 0.0,
                },
            ));
            expected.false_negative += u64::from(is_test);
        }
        // background noise below the score threshold
        for _ in 0..6 {
            let (row, col) = (rng.gen_range(0..11), rng.gen_range(0..11));
            if anchors[..objects + 2].contains(&(row, col)) {
                continue;
            }
            *grid.cell_box_mut(row, col, 0) = RawBox {
                cx: rng.gen_range(0.0..1.0),
                cy: rng.gen_range(0.0..1.0),
                w: rng.gen_range(0.05..0.2),
                h: rng.gen_range(0.05..0.2),
                objectness: rng.gen_range(0.0..0.15),
            };
            grid.cell_probs_mut(row, col)[0] = rng.gen_range(0.0..1.0);
        }
        if is_test {
            expected.true_positive += objects as u64;
        }
        grids.push(GridRecord {
            image_id: id.clone(),
            grid,
        });

        let f6 = features(&mut rng, &id, LayerTag::Fc6, label, 0.0);
        let f7 = features(&mut rng, &id, LayerTag::Fc7, label, 0.0);
        let boxes = serde_json::to_string(&truth).unwrap();
        let split = if is_test { "test" } else { "train" };
        let (f6_file, f7_file) = if is_test {
            ("test_fc6.vfv", "test_fc7.vfv")
        } else {
            ("train_fc6.vfv", "train_fc7.vfv")
        };
        writeln!(
            manifest,
            r#"{{"image_id":"{id}","split":"{split}","variant":"normal","label":"{}","boxes":{boxes},"grids":"grids.vgr","features":["{f6_file}","{f7_file}"]}}"#,
            label.name()
        )
        .unwrap();
        if is_test {
            test6.push(f6);
            test7.push(f7);
            tr6.push(features(&mut rng, &id, LayerTag::Fc6, label, 0.3));
            tr7.push(features(&mut rng, &id, LayerTag::Fc7, label, 0.3));
            writeln!(
                manifest,
                r#"{{"image_id":"{id}","split":"test","variant":"transformed","label":"{}","features":["transformed_fc6.vfv","transformed_fc7.vfv"]}}"#,
                label.name()
            )
            .unwrap();
            labels.push((id, label));
        } else {
            train6.push(f6);
            train7.push(f7);
        }
    }

    let write = |name: &str, records: Vec<FeatureVector>| {
        let path = dir.join(name);
        FeatureFile::new(FEATURE_DIM, records)
            .unwrap()
            .write(&path)
            .unwrap();
        path
    };
    let train_features = vec![
        write("train_fc6.vfv", train6),
        write("train_fc7.vfv", train7),
    ];
    let test_features = vec![write("test_fc6.vfv", test6), write("test_fc7.vfv", test7)];
    let transformed_features = vec![
        write("transformed_fc6.vfv", tr6),
        write("transformed_fc7.vfv", tr7),
    ];
    let grids_path = dir.join("grids.vgr");
    GridFile {
        spec,
        records: grids,
    }
    .write(&grids_path)
    .unwrap();
    let manifest_path = dir.join("manifest.jsonl");
    std::fs::write(&manifest_path, manifest).unwrap();

    Fixture {
        dir: dir.to_path_buf(),
        manifest: manifest_path,
        grids: grids_path,
        train_features,
        test_features,
        transformed_features,
        labels,
        expected,
    }
}
