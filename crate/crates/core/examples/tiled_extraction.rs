//! Quadrant-tiled feature extraction with a patch-local reference backbone.
//!
//! Because every token only sees its own patch, the stitched maps at
//! `k = 1, 2` are identical to the single-pass map. A vision transformer
//! plugged in through the same `Backbone` trait would differ, since each
//! tile is then processed at a finer relative scale.
//!
//! ```text
//! cargo run --example tiled_extraction -- [IMAGE]
//! ```

use countingdino::tensorio::{extract_tiled, ImageTensor, PatchMeanBackbone};

fn main() -> countingdino::Result<()> {
    let image = match std::env::args().nth(1) {
        Some(path) => ImageTensor::open(path)?,
        None => {
            let (h, w) = (100, 130);
            let data = (0..h * w * 3).map(|i| ((i * 37) % 255) as f32 / 255.0).collect();
            ImageTensor::new(h, w, data)?
        }
    };
    // one class token in front of the patch tokens, dropped on extraction
    let backbone = PatchMeanBackbone::new(14).with_prefix_tokens(1);

    let base = extract_tiled(&backbone, &image, 0)?;
    for k in 0..=2 {
        let map = extract_tiled(&backbone, &image, k)?;
        let (rows, cols, d) = map.dims();
        println!(
            "k={k}: {rows}x{cols}x{d}, effective {:?}, identical to k=0: {}",
            map.effective_size(),
            map.data() == base.data()
        );
    }
    Ok(())
}
