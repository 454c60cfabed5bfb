//! Evaluates a small FSC-147-style split and prints the report.
//!
//! ```text
//! cargo run --example evaluate_split -- [ANNOTATIONS.json SPLITS.json FEATURES_DIR]
//! ```
//!
//! Without arguments a toy dataset with synthetic features is generated.

use std::fs;

use countingdino::eval::{evaluate, parse_fsc147};
use countingdino::synthetic::{planted_scene, SceneSpec};
use countingdino::{save_feature_map, FileSource, PipelineConfig, Split};
use serde_json::json;

fn main() -> countingdino::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir().expect("temporary directory");
    let (ann, splits, features) = match args.as_slice() {
        [a, s, f] => (a.into(), s.into(), f.into()),
        _ => toy_dataset(tmp.path())?,
    };

    let dataset = parse_fsc147(&ann, &splits, Split::Test)?;
    let source = FileSource::new(features);
    let mut report = evaluate(&dataset.records, &source, &PipelineConfig::default())?;
    report.add_failures(dataset.rejected);

    for r in &report.per_image {
        println!("{:<8} gt {:>4} pred {:>7.2}", r.image_id, r.gt, r.pred);
    }
    for f in &report.failures {
        println!("{:<8} failed: {}", f.image_id, f.error);
    }
    println!("MAE {:.3}  RMSE {:.3}  over {} images", report.mae, report.rmse, report.n_images);
    Ok(())
}

type Paths = (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf);

fn toy_dataset(root: &std::path::Path) -> countingdino::Result<Paths> {
    let features = root.join("features");
    fs::create_dir_all(features.join("k2")).expect("feature directory");
    let mut ann = serde_json::Map::new();
    let mut ids = Vec::new();
    for (i, k) in [4usize, 11, 23, 40].into_iter().enumerate() {
        let id = format!("{}.jpg", i + 1);
        let scene = planted_scene(k, &SceneSpec { noise: 0.02, seed: i as u64, ..Default::default() })?;
        save_feature_map(
            &scene.map.clone().with_resolution_level(2),
            features.join("k2").join(format!("{}.cdfm", i + 1)),
        )?;
        let corners: Vec<_> = scene.objects[..3]
            .iter()
            .map(|b| json!([[b.x1, b.y1], [b.x1, b.y2], [b.x2, b.y2], [b.x2, b.y1]]))
            .collect();
        // the points only matter through their number
        let points = vec![[0.0, 0.0]; k];
        ann.insert(id.clone(), json!({ "box_examples_coordinates": corners, "points": points }));
        ids.push(id);
    }
    let ann_path = root.join("annotation.json");
    let split_path = root.join("splits.json");
    fs::write(&ann_path, serde_json::to_string(&ann)?).expect("write annotations");
    fs::write(&split_path, json!({ "train": [], "val": [], "test": ids }).to_string()).expect("write splits");
    Ok((ann_path, split_path, features))
}
