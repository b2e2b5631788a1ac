mod common;

use std::fmt::Write as _;
use std::path::Path;

use common::{bin, build, p, run, run_ok};
use vehicle_cli::records::{read_jsonl, ConfidenceRecord, LabelRecord};

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn train_and_predict(f: &common::Fixture, dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let model = dir.join("m.vsvm");
    let conf = dir.join("c.jsonl");
    let mut args = vec![
        "train",
        "--manifest",
        p(&f.manifest),
        "--out",
        p(&model),
        "--features",
    ];
    args.extend(f.train_features.iter().map(|x| p(x)));
    run_ok(&args);
    let mut args = vec![
        "predict",
        "--model",
        p(&model),
        "--out",
        p(&conf),
        "--features",
    ];
    args.extend(f.test_features.iter().map(|x| p(x)));
    run_ok(&args);
    (model, conf)
}

#[test]
fn show_config_prints_defaults() {
    let text = stdout(&run_ok(&["show-config"]));
    for line in [
        "score_threshold = 0.2",
        "overlap_threshold = 0.5",
        "source_width = 4184",
        "source_height = 3108",
        "iou_threshold = 0.5",
        "cost = 1.0",
        "seed = 0",
        "confidence_mode = \"calibrated\"",
    ] {
        assert!(text.contains(line), "missing `{line}` in:\n{text}");
    }
    assert_eq!(stdout(&run_ok(&["--show-config"])), text);
}

#[test]
fn config_precedence_flag_file_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("v.toml");
    std::fs::write(&cfg, "overlap_threshold = 0.3\ncost = 2.0\n").unwrap();

    let text = stdout(&run_ok(&[
        "--config",
        p(&cfg),
        "--cost",
        "4",
        "show-config",
    ]));
    assert!(text.contains("overlap_threshold = 0.3"));
    assert!(text.contains("cost = 4.0"));
    assert!(text.contains("score_threshold = 0.2"));

    let o = bin()
        .env("VEHICLE_CONFIG", &cfg)
        .arg("show-config")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("cost = 2.0"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "\nthreshold = 0.5\n").unwrap();
    let o = run(&["--config", p(&bad), "show-config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml:2"));

    let o = run(&["--overlap-threshold", "1.5", "show-config"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn format_errors_exit_2() {
    let data = tempfile::tempdir().unwrap();
    let f = build(data.path(), 5);
    let out = data.path().join("out.jsonl");

    let mut bytes = std::fs::read(&f.grids).unwrap();
    bytes[0] = b'X';
    let corrupt = data.path().join("corrupt.vgr");
    std::fs::write(&corrupt, &bytes).unwrap();
    let o = run(&["detect", "--grids", p(&corrupt), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));

    let bytes = std::fs::read(&f.test_features[0]).unwrap();
    let truncated = data.path().join("trunc.vfv");
    std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
    let model = data.path().join("m.vsvm");
    let mut args = vec![
        "train",
        "--manifest",
        p(&f.manifest),
        "--out",
        p(&model),
        "--features",
    ];
    args.extend(f.train_features.iter().map(|x| p(x)));
    run_ok(&args);
    let o = run(&[
        "predict",
        "--model",
        p(&model),
        "--features",
        p(&truncated),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));

    let o = run(&[
        "predict",
        "--model",
        p(&f.grids),
        "--features",
        p(&f.test_features[0]),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let json = data.path().join("broken.jsonl");
    std::fs::write(
        &json,
        "{\"image_id\":\"a\",\"passenger\":0.5,\"other\":0.5}\nnot json\n",
    )
    .unwrap();
    let o = run(&[
        "fuse",
        "--original",
        p(&json),
        "--transformed",
        p(&json),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.jsonl:2"));

    let o = run(&[
        "detect",
        "--grids",
        p(&data.path().join("absent.vgr")),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validation_errors_exit_3() {
    let data = tempfile::tempdir().unwrap();
    let f = build(data.path(), 5);
    let out = data.path().join("out");

    // training features missing for the train split
    let o = run(&[
        "train",
        "--manifest",
        p(&f.manifest),
        "--features",
        p(&f.test_features[0]),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());

    // fc7 alone cannot serve an fc6fc7 model
    let (model, conf) = train_and_predict(&f, data.path());
    let o = run(&[
        "predict",
        "--model",
        p(&model),
        "--features",
        p(&f.test_features[1]),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));

    // fuse inputs with different images
    let other = data.path().join("other.jsonl");
    std::fs::write(
        &other,
        "{\"image_id\":\"zzz\",\"passenger\":0.5,\"other\":0.5}\n",
    )
    .unwrap();
    let o = run(&[
        "fuse",
        "--original",
        p(&conf),
        "--transformed",
        p(&other),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));

    // unnormalized confidences
    let skew = data.path().join("skew.jsonl");
    std::fs::write(
        &skew,
        "{\"image_id\":\"a\",\"passenger\":0.9,\"other\":0.9}\n",
    )
    .unwrap();
    let o = run(&[
        "fuse",
        "--original",
        p(&skew),
        "--transformed",
        p(&skew),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));

    // predictions for an image the manifest does not know
    let o = run(&[
        "eval",
        "--manifest",
        p(&f.manifest),
        "--confidences",
        p(&other),
    ]);
    assert_eq!(o.status.code(), Some(3));

    // manifest pointing at a missing file
    let m = data.path().join("dangling.jsonl");
    std::fs::write(
        &m,
        r#"{"image_id":"a","split":"test","variant":"normal","grids":"missing.vgr"}"#,
    )
    .unwrap();
    let o = run(&["eval", "--manifest", p(&m), "--confidences", p(&other)]);
    assert_eq!(o.status.code(), Some(3));

    let o = run(&["eval", "--manifest", p(&f.manifest)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fusing_a_copy_reproduces_single_source_labels() {
    let data = tempfile::tempdir().unwrap();
    let f = build(data.path(), 20);
    let (_, conf) = train_and_predict(&f, data.path());
    let fused = data.path().join("fused.jsonl");
    run_ok(&[
        "fuse",
        "--original",
        p(&conf),
        "--transformed",
        p(&conf),
        "--out",
        p(&fused),
    ]);
    let conf: Vec<ConfidenceRecord> = read_jsonl(&conf).unwrap();
    let fused: Vec<LabelRecord> = read_jsonl(&fused).unwrap();
    assert_eq!(conf.len(), fused.len());
    for (c, l) in conf.iter().zip(&fused) {
        let single = if c.passenger >= c.other {
            "passenger"
        } else {
            "other"
        };
        assert_eq!(c.image_id, l.image_id);
        assert_eq!(l.label.name(), single);
        assert_eq!(l.source, vehicle_core::Source::Original);
    }
}

/// One image with 1106 ground-truth boxes: 921 predicted exactly, 185
/// missed, plus 66 predictions away from any truth.
#[test]
fn eval_report_reproduces_reference_counts() {
    let dir = tempfile::tempdir().unwrap();
    let tile = |k: usize, y0: f64| {
        let (x, y) = ((k % 100) as f64 * 40.0, y0 + (k / 100) as f64 * 40.0);
        [x, y, x + 20.0, y + 20.0]
    };
    let truth: Vec<[f64; 4]> = (0..921 + 185).map(|k| tile(k, 0.0)).collect();
    let mut dets = Vec::new();
    for b in truth.iter().take(921) {
        dets.push(serde_json::json!({"box": b, "confidence": 0.9, "class_id": 0}));
    }
    for k in 0..66 {
        dets.push(serde_json::json!({"box": tile(k, 2000.0), "confidence": 0.6, "class_id": 0}));
    }
    let manifest = dir.path().join("m.jsonl");
    let mut text = String::new();
    writeln!(
        text,
        "{}",
        serde_json::json!({"image_id": "street", "split": "test", "variant": "normal", "boxes": truth})
    )
    .unwrap();
    std::fs::write(&manifest, text).unwrap();
    let detections = dir.path().join("d.jsonl");
    std::fs::write(
        &detections,
        format!(
            "{}\n",
            serde_json::json!({"image_id": "street", "detections": dets})
        ),
    )
    .unwrap();

    let report = stdout(&run_ok(&[
        "eval",
        "--manifest",
        p(&manifest),
        "--detections",
        p(&detections),
    ]));
    assert!(report.contains("true_positive 921\n"), "{report}");
    assert!(report.contains("false_positive 66\n"));
    assert!(report.contains("false_negative 185\n"));
    assert!(report.contains("precision 93.3%\n"));
    assert!(report.contains("recall 83.3%\n"));
}

#[test]
fn raw_confidence_mode_keeps_labels() {
    let data = tempfile::tempdir().unwrap();
    let f = build(data.path(), 20);
    let (model, calibrated) = train_and_predict(&f, data.path());
    let raw = data.path().join("raw.jsonl");
    let mut args = vec![
        "--confidence-mode",
        "raw",
        "predict",
        "--model",
        p(&model),
        "--out",
        p(&raw),
        "--features",
    ];
    args.extend(f.test_features.iter().map(|x| p(x)));
    run_ok(&args);
    let a: Vec<ConfidenceRecord> = read_jsonl(&calibrated).unwrap();
    let b: Vec<ConfidenceRecord> = read_jsonl(&raw).unwrap();
    assert_ne!(a, b);
    for (a, b) in a.iter().zip(&b) {
        assert_eq!(a.passenger > 0.5, b.passenger > 0.5, "{}", a.image_id);
        assert!((b.passenger + b.other - 1.0).abs() < 1e-12);
    }
}

#[test]
fn region_flag_drops_detections_outside() {
    let data = tempfile::tempdir().unwrap();
    let f = build(data.path(), 5);
    let all = data.path().join("all.jsonl");
    let left = data.path().join("left.jsonl");
    run_ok(&["detect", "--grids", p(&f.grids), "--out", p(&all)]);
    run_ok(&[
        "--region",
        "0,0,224,333",
        "detect",
        "--grids",
        p(&f.grids),
        "--out",
        p(&left),
    ]);
    let count = |path: &Path| -> usize {
        read_jsonl::<vehicle_cli::records::DetectionRecord>(path)
            .unwrap()
            .iter()
            .map(|r| r.detections.len())
            .sum()
    };
    assert!(count(&left) < count(&all));
    for r in read_jsonl::<vehicle_cli::records::DetectionRecord>(&left).unwrap() {
        for d in r.detections {
            assert!(d.bbox.center().x <= 4184.0 / 2.0);
        }
    }
}
