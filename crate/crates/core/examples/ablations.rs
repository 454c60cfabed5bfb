//! Switches the ellipse prior, the background threshold and the number of
//! exemplars on a noisy synthetic scene.
//!
//! ```text
//! cargo run --example ablations
//! ```

use countingdino::synthetic::{planted_scene, SceneSpec};
use countingdino::{count_with_features, PipelineConfig};

fn main() -> countingdino::Result<()> {
    let truth = 20;
    let scene = planted_scene(truth, &SceneSpec { noise: 0.03, seed: 11, ..Default::default() })?;

    println!("truth {truth}");
    for (ellipse, thresh) in [(true, true), (false, true), (true, false), (false, false)] {
        for n in 1..=3 {
            let cfg = PipelineConfig {
                apply_ellipse: ellipse,
                apply_threshold: thresh,
                max_exemplars: n,
                ..Default::default()
            };
            let res = count_with_features(&scene.map, "scene", &scene.objects, &cfg)?;
            println!("ellipse {ellipse:<5} threshold {thresh:<5} exemplars {n}: {:>7.2}", res.count);
        }
    }
    Ok(())
}
