//! Training-free, exemplar-based class-agnostic counting on dense patch
//! features from self-supervised vision transformers.
//!
//! Given the patch-feature map of an image and a few exemplar boxes, each
//! exemplar's feature crop (weighted by an elliptical coverage prior) is used
//! as a correlation kernel over the map. The per-exemplar responses are
//! averaged, min-max scaled and divided by a factor that makes the exemplar
//! regions integrate to the number of exemplars, which turns the response
//! into a density map. Background cells below the unit count of the largest
//! exemplar are zeroed, and the remaining mass is the predicted count.
//!
//! # Quick start
//! ```no_run
//! use countingdino::{count_image, FileSource, PipelineConfig, PixelBox};
//!
//! # fn main() -> countingdino::Result<()> {
//! let source = FileSource::new("features/");
//! let boxes = [PixelBox::new(10.0, 20.0, 50.0, 60.0)?];
//! let result = count_image(&source, "2.jpg", &boxes, &PipelineConfig::default())?;
//! println!("{:.1}", result.count);
//! # Ok(())
//! # }
//! ```
//!
//! # Modules
//! - [`tensorio`]: feature maps, the CDFM file format, feature sources and
//!   quadrant-tiled extraction.
//! - [`geometry`]: box snapping and exemplar masks.
//! - [`matching`]: exemplar kernels and same-padded cross-correlation.
//! - [`density`]: normalization, thresholding and integration.
//! - [`pipeline`]: the per-image chain and density export.
//! - [`eval`]: FSC-147 / CARPK parsing and MAE/RMSE reports.
//! - [`baseline`]: prototype filtering of external detections.
//!
//! # Feature flags
//! - `onnx`: `OnnxBackbone`/`OnnxSource`, running exported backbone graphs
//!   in-process through tract.

pub mod baseline;
pub mod cli;
pub mod density;
mod error;
pub mod eval;
pub mod geometry;
pub mod matching;
pub mod pipeline;
pub mod synthetic;
pub mod tensorio;

pub use error::{Error, Result};

pub use density::{DensityMap, ExemplarSet};
pub use eval::{evaluate, AnnotationRecord, EvalReport, Split};
pub use geometry::{PatchBox, PixelBox};
pub use pipeline::{count_image, count_with_features, CountResult, DegeneratePolicy, PipelineConfig};
pub use tensorio::{load_feature_map, save_feature_map, FeatureMap, FeatureSource, FileSource};
