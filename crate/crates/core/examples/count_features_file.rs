//! Counts objects in a CDFM feature file given exemplar boxes in pixels.
//!
//! ```text
//! cargo run --example count_features_file -- FEATURES.cdfm "x1,y1,x2,y2;..."
//! ```
//!
//! Without arguments a synthetic file is written to a temporary directory
//! and counted through a `FileSource`.

use countingdino::cli::parse_inline_boxes;
use countingdino::synthetic::{planted_scene, SceneSpec};
use countingdino::{count_image, count_with_features, load_feature_map, save_feature_map};
use countingdino::{FileSource, PipelineConfig};

fn main() -> countingdino::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [path, boxes] = args.as_slice() {
        let map = load_feature_map(path)?;
        let cfg = PipelineConfig {
            resolution_level: map.resolution_level(),
            ..Default::default()
        };
        let res = count_with_features(&map, path, &parse_inline_boxes(boxes)?, &cfg)?;
        println!("{:.1}", res.count);
        return Ok(());
    }

    let dir = tempfile::tempdir().expect("temporary directory");
    let scene = planted_scene(9, &SceneSpec::default())?;
    let level = 2;
    save_feature_map(
        &scene.map.clone().with_resolution_level(level),
        dir.path().join("street.cdfm"),
    )?;

    let source = FileSource::new(dir.path());
    let cfg = PipelineConfig::default();
    let res = count_image(&source, "street.jpg", &scene.objects[..3], &cfg)?;
    println!("planted {}, counted {:.1}", scene.count(), res.count);
    println!("{}", serde_json::to_string_pretty(&res)?);
    Ok(())
}
