//! Turning an aggregated similarity map into a density map and a count.
//!
//! The similarity map is min-max scaled to `[0, 1]`, then divided by a
//! factor `z` chosen so that the mask-weighted mass inside the exemplar
//! boxes equals the number of exemplars. Cells below the unit count of the
//! largest exemplar are treated as background and zeroed before summing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GlobalMask, PatchBox};
use crate::matching::SimilarityMap;

/// Smallest admissible normalization factor.
pub const MIN_NORMALIZATION: f64 = 1e-9;

/// Normalized density on the feature grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    /// Normalization factor the min-max map was divided by.
    pub z: f64,
    /// Background threshold; 0 when no threshold has been applied.
    pub tau: f64,
    /// Integral before thresholding.
    pub raw_count: f64,
    /// Integral after thresholding (equals `raw_count` when unthresholded).
    pub count: f64,
}

impl DensityMap {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// The exemplar boxes of one image on the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    boxes: Vec<PatchBox>,
}

impl ExemplarSet {
    pub fn new(boxes: Vec<PatchBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::Argument("exemplar set must not be empty".into()));
        }
        Ok(ExemplarSet { boxes })
    }

    pub fn boxes(&self) -> &[PatchBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Areas in patches, in box order.
    pub fn areas(&self) -> Vec<usize> {
        self.boxes.iter().map(PatchBox::area).collect()
    }

    /// The box with the largest area (first one on ties).
    pub fn largest(&self) -> &PatchBox {
        self.boxes
            .iter()
            .reduce(|best, b| if b.area() > best.area() { b } else { best })
            .expect("exemplar set is nonempty")
    }
}

/// Affine rescale to `[0, 1]`.
pub fn minmax(map: &SimilarityMap) -> Result<SimilarityMap> {
    let (lo, hi) = map
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return Err(Error::DegenerateMap(lo));
    }
    let span = hi - lo;
    map.map_values(|v| (v - lo) / span)
}

/// `z = (1/N) * sum(M ⊙ S01)` over the whole grid.
pub fn normalization_factor(s01: &SimilarityMap, gmask: &GlobalMask, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("number of exemplars must be at least 1".into()));
    }
    if s01.dims() != (gmask.rows(), gmask.cols()) {
        return Err(Error::Shape(format!(
            "similarity map {:?} vs exemplar mask {:?}",
            s01.dims(),
            (gmask.rows(), gmask.cols())
        )));
    }
    let weighted: f64 = s01
        .values()
        .iter()
        .zip(gmask.weights())
        .map(|(s, m)| s * m)
        .sum();
    let z = weighted / n as f64;
    if z <= MIN_NORMALIZATION {
        return Err(Error::DegenerateNormalization(z));
    }
    Ok(z)
}

/// Divides the min-max map by `z`. The result is not thresholded.
pub fn normalize(s01: &SimilarityMap, z: f64) -> Result<DensityMap> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Argument(format!("normalization factor must be positive, got {z}")));
    }
    let values: Vec<f64> = s01.values().iter().map(|v| v / z).collect();
    let raw_count = values.iter().sum();
    Ok(DensityMap {
        rows: s01.rows(),
        cols: s01.cols(),
        values,
        z,
        tau: 0.0,
        raw_count,
        count: raw_count,
    })
}

/// Mean per-patch mass of a relevant patch: `|B| / sum(area(b))`.
pub fn unit_count(boxes: &ExemplarSet) -> f64 {
    let total: usize = boxes.areas().iter().sum();
    boxes.len() as f64 / total as f64
}

/// Background threshold: the unit count of the largest exemplar alone.
pub fn threshold(boxes: &ExemplarSet) -> f64 {
    1.0 / boxes.largest().area() as f64
}

/// Zeros every cell strictly below the threshold and integrates the rest.
/// The surviving values are not renormalized.
pub fn threshold_and_count(density: &DensityMap, boxes: &ExemplarSet) -> DensityMap {
    let tau = threshold(boxes);
    let values: Vec<f64> = density
        .values
        .iter()
        .map(|&v| if v < tau { 0.0 } else { v })
        .collect();
    let count = values.iter().sum();
    DensityMap {
        rows: density.rows,
        cols: density.cols,
        values,
        z: density.z,
        tau,
        raw_count: density.raw_count,
        count,
    }
}

/// Both stages of the density head.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOutput {
    pub unthresholded: DensityMap,
    pub final_map: DensityMap,
}

/// Runs min-max, normalization and (optionally) thresholding on an
/// aggregated similarity map. `gmask` must hold exactly the masks of the
/// exemplars in `boxes`.
pub fn density_head(
    similarity: &SimilarityMap,
    gmask: &GlobalMask,
    boxes: &ExemplarSet,
    apply_threshold: bool,
) -> Result<DensityOutput> {
    let s01 = minmax(similarity)?;
    let z = normalization_factor(&s01, gmask, boxes.len())?;
    let unthresholded = normalize(&s01, z)?;
    let final_map = if apply_threshold {
        threshold_and_count(&unthresholded, boxes)
    } else {
        unthresholded.clone()
    };
    Ok(DensityOutput {
        unthresholded,
        final_map,
    })
}
