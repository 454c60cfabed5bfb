use std::path::Path;
use std::process::{Command, Output};

use countingdino::pipeline::read_density_csv;
use countingdino::synthetic::{planted_scene, PlantedScene, SceneSpec};
use countingdino::{save_feature_map, CountResult, EvalReport, Split};
use serde_json::json;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_countingdino"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scene(k: usize, seed: u64) -> PlantedScene {
    planted_scene(k, &SceneSpec { seed, ..Default::default() }).unwrap()
}

fn inline(scene: &PlantedScene) -> String {
    scene.objects[..3]
        .iter()
        .map(|b| format!("{},{},{},{}", b.x1, b.y1, b.x2, b.y2))
        .collect::<Vec<_>>()
        .join(";")
}

fn write_scene(dir: &Path, name: &str, scene: &PlantedScene, level: u32) -> String {
    let path = dir.join(name);
    save_feature_map(&scene.map.clone().with_resolution_level(level), &path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn count_prints_rounded_count() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(7, 1);
    let f = write_scene(dir.path(), "a.cdfm", &s, 0);
    let out = bin(&["count", "--features", &f, "--boxes", &inline(&s)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "7.0");
}

#[test]
fn count_json_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(5, 2);
    let f = write_scene(dir.path(), "a.cdfm", &s, 0);
    let out = bin(&["count", "--features", &f, "--boxes", &inline(&s), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let res: CountResult = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((res.count - 5.0).abs() < 1e-9);
    assert_eq!(res.n_exemplars, 3);
    let fields: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let mut keys: Vec<_> = fields.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["count", "exemplar_boxes", "image_id", "n_exemplars", "raw_count", "tau", "z"]);
}

#[test]
fn boxes_file_and_features_dir() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(4, 3);
    std::fs::create_dir_all(dir.path().join("k1")).unwrap();
    write_scene(&dir.path().join("k1"), "img.cdfm", &s, 1);
    let boxes: Vec<[f64; 4]> = s.objects[..2].iter().map(|b| [b.x1, b.y1, b.x2, b.y2]).collect();
    let bf = dir.path().join("boxes.json");
    std::fs::write(&bf, serde_json::to_string(&boxes).unwrap()).unwrap();
    let out = bin(&[
        "count",
        "--features-dir",
        dir.path().to_str().unwrap(),
        "--image",
        "img.jpg",
        "--k",
        "1",
        "--boxes-file",
        bf.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).trim(), "4.0");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bin(&["count", "--bogus"]).status.code(), Some(2));
    assert_eq!(bin(&[]).status.code(), Some(2));
    let both = bin(&["count", "--features", "x.cdfm", "--boxes", "0,0,1,1", "--boxes-file", "b.json"]);
    assert_eq!(both.status.code(), Some(2));
    let bad_box = bin(&["count", "--features", "x.cdfm", "--boxes", "0,0,1"]);
    assert_eq!(bad_box.status.code(), Some(2));
    assert_eq!(bin(&["count", "--boxes", "0,0,1,1"]).status.code(), Some(2));
    let two_inputs = bin(&["count", "--features", "x.cdfm", "--features-dir", ".", "--image", "a", "--boxes", "0,0,1,1"]);
    assert_eq!(two_inputs.status.code(), Some(2));
    assert_eq!(bin(&["count", "--features-dir", ".", "--boxes", "0,0,1,1"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let out = bin(&["count", "--features", "/nonexistent.cdfm", "--boxes", "0,0,14,14"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.cdfm");
    std::fs::write(&junk, b"XXXXnot a feature file at all, clearly").unwrap();
    let out = bin(&["inspect", "--features", junk.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

fn fsc147_tree(dir: &Path, with_missing: bool) -> (String, String, String) {
    let features = dir.join("features");
    std::fs::create_dir_all(features.join("k2")).unwrap();
    let mut ann = serde_json::Map::new();
    let mut ids = Vec::new();
    for (i, k) in [3usize, 6, 9].into_iter().enumerate() {
        let s = scene(k, 10 + i as u64);
        write_scene(&features.join("k2"), &format!("{i}.cdfm"), &s, 2);
        let corners: Vec<_> = s.objects[..3]
            .iter()
            .map(|b| json!([[b.x1, b.y1], [b.x1, b.y2], [b.x2, b.y2], [b.x2, b.y1]]))
            .collect();
        ann.insert(
            format!("{i}.jpg"),
            json!({ "box_examples_coordinates": corners, "points": vec![[1.0, 1.0]; k] }),
        );
        ids.push(format!("{i}.jpg"));
    }
    if with_missing {
        ann.insert("9.jpg".into(), ann["0.jpg"].clone());
        ids.push("9.jpg".into());
    }
    let a = dir.join("ann.json");
    let sp = dir.join("splits.json");
    std::fs::write(&a, serde_json::to_string(&ann).unwrap()).unwrap();
    std::fs::write(&sp, json!({"train": [], "val": [], "test": ids}).to_string()).unwrap();
    (
        features.to_str().unwrap().into(),
        a.to_str().unwrap().into(),
        sp.to_str().unwrap().into(),
    )
}

#[test]
fn eval_fsc147_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let (f, a, s) = fsc147_tree(dir.path(), false);
    let report_path = dir.path().join("report.json");
    let out = bin(&[
        "eval", "--dataset", "fsc147", "--split", "test", "--features-dir", &f, "--ann", &a, "--splits", &s,
        "--k", "2", "--json", "--jobs", "2", "--report", report_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = EvalReport::from_json(&stdout(&out)).unwrap();
    assert_eq!(report.split, Split::Test);
    assert_eq!(report.n_images, 3);
    assert!(report.mae < 1e-9);
    let saved = EvalReport::from_json(&std::fs::read_to_string(report_path).unwrap()).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn eval_with_failures_exits_one_but_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (f, a, s) = fsc147_tree(dir.path(), true);
    let out = bin(&[
        "eval", "--dataset", "fsc147", "--features-dir", &f, "--ann", &a, "--splits", &s, "--json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report = EvalReport::from_json(&stdout(&out)).unwrap();
    assert_eq!(report.per_image.len(), 3);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].image_id, "9.jpg");
}

#[test]
fn eval_carpk_tree() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("Annotations");
    let feats = dir.path().join("features");
    std::fs::create_dir_all(&ann).unwrap();
    std::fs::create_dir_all(&feats).unwrap();
    for (i, k) in [4usize, 8].into_iter().enumerate() {
        let s = scene(k, 20 + i as u64);
        write_scene(&feats, &format!("lot{i}.cdfm"), &s, 0);
        let lines: String = s
            .objects
            .iter()
            .map(|b| format!("{} {} {} {} 1\n", b.x1, b.y1, b.x2, b.y2))
            .collect();
        std::fs::write(ann.join(format!("lot{i}.txt")), lines).unwrap();
    }
    let out = bin(&[
        "eval", "--dataset", "carpk", "--features-dir", feats.to_str().unwrap(),
        "--ann", dir.path().to_str().unwrap(), "--k", "0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("MAE 0.00"));
}

#[test]
fn fsc147_without_splits_is_usage_error() {
    let out = bin(&["eval", "--dataset", "fsc147", "--features-dir", ".", "--ann", "a.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_reports_header() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_scene(dir.path(), "a.cdfm", &scene(2, 4), 1);
    let out = bin(&["inspect", "--features", &f, "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["header"]["resolution_level"], 1);
    assert_eq!(v["header"]["channels"], 16);
    assert_eq!(v["header"]["patch_size"], 14);
}

#[test]
fn baseline_counts_similar_detections() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(5, 5);
    let f = write_scene(dir.path(), "a.cdfm", &s, 0);
    let mut dets: Vec<[f64; 5]> = s.objects.iter().map(|b| [b.x1, b.y1, b.x2, b.y2, 0.9]).collect();
    dets.push([0.0, 0.0, 14.0, 14.0, 0.8]);
    let df = dir.path().join("dets.json");
    std::fs::write(&df, serde_json::to_string(&json!({ "a.jpg": dets })).unwrap()).unwrap();
    let out = bin(&[
        "baseline", "--features", &f, "--boxes", &inline(&s), "--detections", df.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).trim(), "5");

    let out = bin(&[
        "baseline", "--features", &f, "--boxes", &inline(&s), "--detections", df.to_str().unwrap(),
        "--threshold", "-1", "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["n_detections"], 6);

    let out = bin(&[
        "baseline", "--features", &f, "--boxes", &inline(&s), "--detections", df.to_str().unwrap(),
        "--threshold", "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_density_writes_maps() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(6, 6);
    let f = write_scene(dir.path(), "street.cdfm", &s, 0);
    let out_dir = dir.path().join("out");
    let out = bin(&[
        "export-density", "--features", &f, "--boxes", &inline(&s), "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (rows, cols, values) = read_density_csv(out_dir.join("street_density.csv")).unwrap();
    assert_eq!((rows, cols), (s.map.rows(), s.map.cols()));
    assert!((values.iter().sum::<f64>() - 6.0).abs() < 1e-9);
    assert!(out_dir.join("street_density.png").is_file());
    assert!(out_dir.join("street_density_raw.csv").is_file());

    let missing = bin(&["export-density", "--features", &f, "--boxes", &inline(&s)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn ablation_flags_change_the_count() {
    let dir = tempfile::tempdir().unwrap();
    let s = planted_scene(10, &SceneSpec { noise: 0.1, seed: 9, ..Default::default() }).unwrap();
    let f = write_scene(dir.path(), "a.cdfm", &s, 0);
    let run = |extra: &[&str]| -> CountResult {
        let b = inline(&s);
        let mut args = vec!["count", "--features", f.as_str(), "--boxes", b.as_str(), "--json"];
        args.extend_from_slice(extra);
        serde_json::from_str(&stdout(&bin(&args))).unwrap()
    };
    let full = run(&[]);
    let no_thr = run(&["--no-threshold"]);
    assert!(full.count <= full.raw_count);
    assert_eq!(no_thr.count, no_thr.raw_count);
    assert_eq!(no_thr.tau, 0.0);
    let one = run(&["--exemplars", "1"]);
    assert_eq!(one.n_exemplars, 1);
    let no_ell = run(&["--no-ellipse"]);
    assert_ne!(no_ell.z, full.z);
}

#[test]
fn degenerate_image_defaults_to_zero_count() {
    let dir = tempfile::tempdir().unwrap();
    let map = countingdino::FeatureMap::new(vec![1.0; 5 * 5 * 4], 5, 5, 4, 14).unwrap();
    let path = dir.path().join("flat.cdfm");
    save_feature_map(&map, &path).unwrap();
    let p = path.to_str().unwrap();
    let out = bin(&["count", "--features", p, "--boxes", "0,0,14,14"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "0.0");
    let strict = bin(&["count", "--features", p, "--boxes", "0,0,14,14", "--degenerate", "error"]);
    assert_eq!(strict.status.code(), Some(1));
}
