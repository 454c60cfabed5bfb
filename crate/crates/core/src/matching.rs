//! Exemplar kernels and "same"-padded cross-correlation over a feature map.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ExemplarMask, PatchBox};
use crate::tensorio::FeatureMap;

/// Feature crop of one exemplar, `height x width x channels`, optionally
/// weighted cell-wise by the exemplar mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarKernel {
    height: usize,
    width: usize,
    channels: usize,
    weights: Vec<f64>,
    source: PatchBox,
    masked: bool,
}

impl ExemplarKernel {
    /// Builds a kernel from raw weights. `source` is informational; only its
    /// size has to agree with `height x width`.
    pub fn from_weights(
        weights: Vec<f64>,
        height: usize,
        width: usize,
        channels: usize,
        source: PatchBox,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "kernel dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if weights.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "kernel {height}x{width}x{channels} needs {} weights, got {}",
                height * width * channels,
                weights.len()
            )));
        }
        if source.height() != height || source.width() != width {
            return Err(Error::Shape(format!(
                "kernel {height}x{width} does not match box {source:?}"
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite kernel weight".into()));
        }
        Ok(ExemplarKernel {
            height,
            width,
            channels,
            weights,
            source,
            masked: false,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn source(&self) -> &PatchBox {
        &self.source
    }

    pub fn is_masked(&self) -> bool {
        self.masked
    }

    #[inline]
    fn cell(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.width + j) * self.channels;
        &self.weights[start..start + self.channels]
    }
}

/// Crops the features under `b`; with `apply_mask` each cell vector is
/// scaled by the corresponding mask weight.
pub fn extract_kernel(
    map: &FeatureMap,
    b: &PatchBox,
    mask: &ExemplarMask,
    apply_mask: bool,
) -> Result<ExemplarKernel> {
    if !b.fits(map.rows(), map.cols()) {
        return Err(Error::Shape(format!(
            "box {b:?} exceeds the {}x{} feature map",
            map.rows(),
            map.cols()
        )));
    }
    if mask.height() != b.height() || mask.width() != b.width() {
        return Err(Error::Shape(format!(
            "mask is {}x{}, box is {}x{}",
            mask.height(),
            mask.width(),
            b.height(),
            b.width()
        )));
    }
    let (h, w, d) = (b.height(), b.width(), map.channels());
    let mut weights = Vec::with_capacity(h * w * d);
    for i in 0..h {
        for j in 0..w {
            let scale = if apply_mask { mask.get(i, j) } else { 1.0 };
            weights.extend(
                map.cell(b.row1 + i, b.col1 + j)
                    .iter()
                    .map(|&v| v as f64 * scale),
            );
        }
    }
    Ok(ExemplarKernel {
        height: h,
        width: w,
        channels: d,
        weights,
        source: *b,
        masked: apply_mask,
    })
}

/// Response map on the feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    n_exemplars_aggregated: usize,
}

impl SimilarityMap {
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "similarity map {rows}x{cols} with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite similarity value".into()));
        }
        Ok(SimilarityMap {
            rows,
            cols,
            values,
            n_exemplars_aggregated: 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn n_exemplars_aggregated(&self) -> usize {
        self.n_exemplars_aggregated
    }

    /// Applies `f` to every value, keeping the shape and exemplar count.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<SimilarityMap> {
        let mut out = SimilarityMap::from_values(
            self.rows,
            self.cols,
            self.values.iter().map(|&v| f(v)).collect(),
        )?;
        out.n_exemplars_aggregated = self.n_exemplars_aggregated;
        Ok(out)
    }

    /// `(row, col)` of the first maximum in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

/// Zero-padded "same" cross-correlation (no kernel flip):
///
/// `out(r, c) = sum_{i,j,d} K(i, j, d) * F(r - (h-1)/2 + i, c - (w-1)/2 + j, d)`
///
/// with integer division, so the output has the map's spatial dims for any
/// kernel size and even kernels anchor just above-left of center.
pub fn correlate(map: &FeatureMap, kernel: &ExemplarKernel) -> Result<SimilarityMap> {
    if kernel.channels() != map.channels() {
        return Err(Error::Shape(format!(
            "kernel has {} channels, feature map has {}",
            kernel.channels(),
            map.channels()
        )));
    }
    let (rows, cols) = (map.rows(), map.cols());
    let (h, w) = (kernel.height(), kernel.width());
    let (anchor_r, anchor_c) = ((h - 1) / 2, (w - 1) / 2);

    let mut values = vec![0.0f64; rows * cols];
    values
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(r, out_row)| {
            for i in 0..h {
                // source row = r - anchor_r + i
                let Some(sr) = (r + i).checked_sub(anchor_r).filter(|&sr| sr < rows) else {
                    continue;
                };
                for j in 0..w {
                    let kcell = kernel.cell(i, j);
                    for (c, out) in out_row.iter_mut().enumerate() {
                        let Some(sc) = (c + j).checked_sub(anchor_c).filter(|&sc| sc < cols) else {
                            continue;
                        };
                        *out += dot(kcell, map.cell(sr, sc));
                    }
                }
            }
        });
    SimilarityMap::from_values(rows, cols, values)
}

#[inline]
fn dot(kernel: &[f64], features: &[f32]) -> f64 {
    kernel
        .iter()
        .zip(features)
        .map(|(&k, &f)| k * f as f64)
        .sum()
}

/// Elementwise mean of co-registered similarity maps.
pub fn aggregate(maps: &[SimilarityMap]) -> Result<SimilarityMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Argument("cannot aggregate an empty list of maps".into()))?;
    let dims = first.dims();
    if let Some(bad) = maps.iter().find(|m| m.dims() != dims) {
        return Err(Error::Shape(format!(
            "cannot aggregate {:?} with {:?}",
            bad.dims(),
            dims
        )));
    }
    let n = maps.len() as f64;
    let mut values = vec![0.0; first.values.len()];
    for m in maps {
        for (acc, v) in values.iter_mut().zip(&m.values) {
            *acc += v;
        }
    }
    values.iter_mut().for_each(|v| *v /= n);
    let mut out = SimilarityMap::from_values(dims.0, dims.1, values)?;
    out.n_exemplars_aggregated = maps.len();
    Ok(out)
}
