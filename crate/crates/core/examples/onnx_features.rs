//! Extracts features from an image with an exported ONNX backbone and saves
//! them as CDFM.
//!
//! ```text
//! cargo run --features onnx --example onnx_features -- MODEL.onnx PATCH IMAGE K OUT.cdfm
//! ```

use countingdino::tensorio::{extract_tiled, ImageTensor, OnnxBackbone};
use countingdino::save_feature_map;

fn main() -> countingdino::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [model, patch, image, k, out] = args.as_slice() else {
        eprintln!("usage: onnx_features MODEL.onnx PATCH IMAGE K OUT.cdfm");
        std::process::exit(2);
    };
    let patch: usize = patch.parse().expect("patch size");
    let k: u32 = k.parse().expect("resolution level");

    let backbone = OnnxBackbone::load(model, patch)?;
    let map = extract_tiled(&backbone, &ImageTensor::open(image)?, k)?;
    println!("{:?} at level {k}", map.dims());
    save_feature_map(&map, out)
}
