//! Dataset parsing (FSC-147, CARPK) and split-level MAE/RMSE evaluation.

mod carpk;
mod fsc147;
mod metrics;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use carpk::{parse_boxes as parse_carpk_boxes, parse_carpk, record_from_text as carpk_record, ExemplarSelection};
pub use fsc147::{parse_fsc147, parse_fsc147_str};
pub use metrics::{mae, rmse};

use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::pipeline::{count_image, PipelineConfig};
use crate::tensorio::FeatureSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split {other:?}"))),
        }
    }
}

/// One annotated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub exemplar_boxes: Vec<PixelBox>,
    pub gt_count: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub image_id: String,
    pub error: String,
}

/// Parsed records plus the entries whose annotations could not be used.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<AnnotationRecord>,
    pub rejected: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image_id: String,
    pub gt: f64,
    pub pred: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub n_images: usize,
    pub mae: f64,
    pub rmse: f64,
    pub per_image: Vec<ImageResult>,
    pub config: PipelineConfig,
    pub failures: Vec<Failure>,
}

impl EvalReport {
    /// Adds images that failed before evaluation (e.g. unusable annotations).
    pub fn add_failures(&mut self, failures: impl IntoIterator<Item = Failure>) {
        self.failures.extend(failures);
        self.failures.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        self.n_images = self.per_image.len() + self.failures.len();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Runs the pipeline on every record and aggregates MAE/RMSE over the images
/// that succeeded. Failing images are listed, not fatal. Results are sorted
/// by image id, so the report does not depend on record order.
pub fn evaluate<S: FeatureSource + ?Sized>(
    records: &[AnnotationRecord],
    source: &S,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let split = records
        .first()
        .map(|r| r.split)
        .ok_or_else(|| Error::Evaluation("no records to evaluate".into()))?;

    let outcomes: Vec<_> = records
        .par_iter()
        .map(|rec| {
            (
                rec,
                count_image(source, &rec.image_id, &rec.exemplar_boxes, cfg),
            )
        })
        .collect();

    let mut per_image = Vec::new();
    let mut failures = Vec::new();
    for (rec, outcome) in outcomes {
        match outcome {
            Ok(res) => {
                let gt = rec.gt_count as f64;
                per_image.push(ImageResult {
                    image_id: rec.image_id.clone(),
                    gt,
                    pred: res.count,
                    abs_err: (gt - res.count).abs(),
                });
            }
            Err(e) => failures.push(Failure {
                image_id: rec.image_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    per_image.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    failures.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let gt: Vec<f64> = per_image.iter().map(|r| r.gt).collect();
    let pred: Vec<f64> = per_image.iter().map(|r| r.pred).collect();
    let (Some(mae), Some(rmse)) = (mae(&gt, &pred), rmse(&gt, &pred)) else {
        return Err(Error::Evaluation(format!(
            "none of the {} images could be evaluated",
            records.len()
        )));
    };
    Ok(EvalReport {
        split,
        n_images: per_image.len() + failures.len(),
        mae,
        rmse,
        per_image,
        config: cfg.clone(),
        failures,
    })
}
