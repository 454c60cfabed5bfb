//! Counts objects planted in synthetic feature maps and compares with the
//! truth.
//!
//! ```text
//! cargo run --example planted_objects -- [noise]
//! ```

use countingdino::synthetic::{planted_scene, SceneSpec};
use countingdino::{count_with_features, PipelineConfig};

fn main() -> countingdino::Result<()> {
    let noise: f32 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("noise must be a number"))
        .unwrap_or(0.0);
    let cfg = PipelineConfig::default();

    println!("{:>5} {:>9} {:>9} {:>8}", "truth", "count", "raw", "z");
    for k in [1, 3, 7, 12, 25, 50] {
        let spec = SceneSpec {
            noise,
            seed: k as u64,
            ..Default::default()
        };
        let scene = planted_scene(k, &spec)?;
        let exemplars = &scene.objects[..scene.objects.len().min(3)];
        let res = count_with_features(&scene.map, "synthetic", exemplars, &cfg)?;
        println!("{k:>5} {:>9.3} {:>9.3} {:>8.4}", res.count, res.raw_count, res.z);
    }
    Ok(())
}
