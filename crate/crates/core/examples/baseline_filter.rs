//! Detection filtering baseline: external detections are kept when their
//! pooled feature is close enough (cosine) to the mean exemplar feature.
//!
//! ```text
//! cargo run --example baseline_filter
//! ```

use countingdino::baseline::{detection_similarities, filter_count, prototype, Detection, DetectionSet};
use countingdino::synthetic::{planted_scene, SceneSpec};
use countingdino::PixelBox;

fn main() -> countingdino::Result<()> {
    let scene = planted_scene(6, &SceneSpec { noise: 0.05, seed: 3, ..Default::default() })?;
    let proto = prototype(&scene.map, &scene.objects[..3])?;

    // every planted object plus two boxes on background
    let mut detections: Vec<Detection> = scene
        .objects
        .iter()
        .map(|&bbox| Detection { bbox, score: Some(0.9) })
        .collect();
    for x in [0.0, 14.0] {
        detections.push(Detection {
            bbox: PixelBox::new(x, 0.0, x + 14.0, 14.0)?,
            score: Some(0.4),
        });
    }
    let set = DetectionSet {
        image_id: "scene".into(),
        detections,
    };

    let sims = detection_similarities(&scene.map, &set, &proto)?;
    for (d, s) in set.detections.iter().zip(&sims) {
        println!("({:>5.1}, {:>5.1}) similarity {:?}", d.bbox.x1, d.bbox.y1, s.map(|v| (v * 1e3).round() / 1e3));
    }
    for thr in [0.0, 0.5, 0.9] {
        println!("threshold {thr}: {} kept", filter_count(&scene.map, &set, &proto, thr)?);
    }
    Ok(())
}
