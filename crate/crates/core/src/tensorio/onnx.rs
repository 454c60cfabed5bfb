//! Backbone graphs exported to ONNX, run in-process with tract.
//!
//! The graph takes one `[1, 3, h, w]` float tensor (ImageNet-normalized RGB)
//! and returns `[1, T, D]` or `[T, D]` tokens, non-patch tokens first. A
//! separate optimized plan is built and cached per tile shape.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use tract_onnx::prelude::*;

use crate::error::{Error, Result};
use crate::tensorio::{Backbone, BackboneSource, ImageTensor, PatchTokens};

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

type Plan = Arc<TypedRunnableModel>;

pub struct OnnxBackbone {
    model_path: PathBuf,
    patch_size: usize,
    mean: [f32; 3],
    std: [f32; 3],
    plans: Mutex<HashMap<(usize, usize), Plan>>,
}

impl OnnxBackbone {
    /// Checks that `model_path` parses; plans are built lazily per tile size.
    pub fn load(model_path: impl AsRef<Path>, patch_size: usize) -> Result<Self> {
        let model_path = model_path.as_ref().to_path_buf();
        if patch_size == 0 {
            return Err(Error::Argument("patch size must be positive".into()));
        }
        tract_onnx::onnx()
            .model_for_path(&model_path)
            .map_err(|e| Error::Backbone(format!("{}: {e}", model_path.display())))?;
        Ok(OnnxBackbone {
            model_path,
            patch_size,
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
            plans: Mutex::new(HashMap::new()),
        })
    }

    /// Replaces the per-channel input normalization.
    pub fn with_normalization(mut self, mean: [f32; 3], std: [f32; 3]) -> Self {
        self.mean = mean;
        self.std = std;
        self
    }

    fn plan(&self, h: usize, w: usize) -> Result<Plan> {
        let mut plans = self
            .plans
            .lock()
            .map_err(|_| Error::Backbone("plan cache poisoned".into()))?;
        if let Some(p) = plans.get(&(h, w)) {
            return Ok(p.clone());
        }
        let backend = |e: TractError| Error::Backbone(format!("{}: {e}", self.model_path.display()));
        let plan = tract_onnx::onnx()
            .model_for_path(&self.model_path)
            .and_then(|m| m.with_input_fact(0, f32::fact([1, 3, h, w]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(backend)?;
        plans.insert((h, w), plan.clone());
        Ok(plan)
    }
}

impl Backbone for OnnxBackbone {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn forward(&self, tile: &ImageTensor) -> Result<PatchTokens> {
        let (h, w) = (tile.height(), tile.width());
        let mut chw = vec![0.0f32; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                let px = tile.pixel(y, x);
                for c in 0..3 {
                    chw[(c * h + y) * w + x] = (px[c] - self.mean[c]) / self.std[c];
                }
            }
        }
        let input = Tensor::from_shape(&[1, 3, h, w], &chw)
            .map_err(|e| Error::Backbone(e.to_string()))?;
        let outputs = self
            .plan(h, w)?
            .run(tvec!(input.into()))
            .map_err(|e| Error::Backbone(e.to_string()))?;
        let out = outputs
            .first()
            .ok_or_else(|| Error::Backbone("graph produced no outputs".into()))?;
        let view = out
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Backbone(e.to_string()))?;
        let (tokens, dim) = match view.shape() {
            [1, t, d] | [t, d] => (*t, *d),
            other => {
                return Err(Error::Shape(format!(
                    "expected [1, T, D] tokens, graph returned {other:?}"
                )))
            }
        };
        Ok(PatchTokens {
            tokens,
            dim,
            data: view.iter().copied().collect(),
        })
    }
}

/// Feature source decoding images from a directory and running an ONNX
/// backbone with quadrant tiling.
pub type OnnxSource = BackboneSource<OnnxBackbone>;
