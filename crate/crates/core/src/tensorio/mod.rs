//! Feature-map representation, the CDFM file format, feature sources and
//! quadrant stitching.

mod backbone;
mod cdfm;
mod feature_map;
#[cfg(feature = "onnx")]
mod onnx;
mod source;
mod stitch;

pub use backbone::{
    extract_tiled, Backbone, BackboneSource, ImageTensor, PatchMeanBackbone, PatchTokens,
};
pub use cdfm::{
    decode_feature_map, load_feature_map, read_feature_map, read_header, save_feature_map,
    write_feature_map, CdfmHeader, HEADER_LEN, MAGIC, VERSION,
};
pub use feature_map::FeatureMap;
#[cfg(feature = "onnx")]
pub use onnx::{OnnxBackbone, OnnxSource};
pub use source::{FeatureSource, FileSource, InMemorySource};
pub use stitch::stitch_quadrants;
