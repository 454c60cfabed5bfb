//! Writes the density map of a synthetic scene as CSV and grayscale PNG,
//! before and after background thresholding.
//!
//! ```text
//! cargo run --example export_density -- [OUT_DIR]
//! ```

use countingdino::pipeline::export_density;
use countingdino::synthetic::{planted_scene, SceneSpec};
use countingdino::{count_with_features, PipelineConfig};

fn main() -> countingdino::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "density_out".into());
    let scene = planted_scene(15, &SceneSpec { noise: 0.05, ..Default::default() })?;
    let cfg = PipelineConfig {
        keep_density: true,
        ..Default::default()
    };
    let res = count_with_features(&scene.map, "scene.jpg", &scene.objects[..3], &cfg)?;
    println!("count {:.2} (raw {:.2}, tau {:.4})", res.count, res.raw_count, res.tau);
    for path in export_density(&res, &out, true)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
