//! Exemplar boxes in pixel and patch space, elliptical cell-coverage masks
//! and the accumulated exemplar mask used for density normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of samples per cell side when rasterizing the ellipse.
pub const DEFAULT_SUPERSAMPLE: usize = 32;

/// Axis-aligned box in pixels, origin top-left, `x` to the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl PixelBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = PixelBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    /// Bounding box of a point set, e.g. the four corners of an annotation.
    pub fn from_points(points: &[[f64; 2]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Geometry("box from an empty point list".into()));
        }
        let (mut x1, mut y1) = (f64::INFINITY, f64::INFINITY);
        let (mut x2, mut y2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &[x, y] in points {
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x);
            y2 = y2.max(y);
        }
        PixelBox::new(x1, y1, x2, y2)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x1 < 0.0 || self.y1 < 0.0 || self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(Error::Geometry(format!(
                "invalid pixel box ({}, {}, {}, {})",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }
}

/// Box on the patch grid, half-open: columns `[col1, col2)`, rows `[row1, row2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchBox {
    pub col1: usize,
    pub row1: usize,
    pub col2: usize,
    pub row2: usize,
}

impl PatchBox {
    pub fn new(col1: usize, row1: usize, col2: usize, row2: usize) -> Result<Self> {
        if col2 <= col1 || row2 <= row1 {
            return Err(Error::Geometry(format!(
                "empty patch box cols [{col1}, {col2}) rows [{row1}, {row2})"
            )));
        }
        Ok(PatchBox {
            col1,
            row1,
            col2,
            row2,
        })
    }

    pub fn width(&self) -> usize {
        self.col2 - self.col1
    }

    pub fn height(&self) -> usize {
        self.row2 - self.row1
    }

    /// Area in patches.
    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row1..self.row2).contains(&row) && (self.col1..self.col2).contains(&col)
    }

    /// Whether the box lies inside a `rows x cols` grid.
    pub fn fits(&self, rows: usize, cols: usize) -> bool {
        self.row2 <= rows && self.col2 <= cols
    }
}

/// Snaps a pixel box onto a patch grid of `grid = (rows, cols)` cells with
/// pitch `patch_size`, expanding outward so the patches cover every pixel of
/// the box. The result is clamped to the grid.
pub fn snap_box(b: &PixelBox, patch_size: usize, grid: (usize, usize)) -> Result<PatchBox> {
    b.validate()?;
    if patch_size == 0 {
        return Err(Error::Geometry("patch size must be positive".into()));
    }
    let p = patch_size as f64;
    let (rows, cols) = grid;
    let col1 = (b.x1 / p).floor() as usize;
    let row1 = (b.y1 / p).floor() as usize;
    let col2 = ((b.x2 / p).ceil() as usize).min(cols);
    let row2 = ((b.y2 / p).ceil() as usize).min(rows);
    if col1 >= col2 || row1 >= row2 {
        return Err(Error::Geometry(format!(
            "box ({}, {}, {}, {}) falls outside the {rows}x{cols} patch grid",
            b.x1, b.y1, b.x2, b.y2
        )));
    }
    PatchBox::new(col1, row1, col2, row2)
}

/// Per-cell weights over an exemplar's patch box, `height x width`
/// row-major, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarMask {
    weights: Vec<f64>,
    source: PatchBox,
}

impl ExemplarMask {
    /// All-ones mask, i.e. no spatial prior.
    pub fn uniform(source: PatchBox) -> Self {
        ExemplarMask {
            weights: vec![1.0; source.area()],
            source,
        }
    }

    pub fn source(&self) -> &PatchBox {
        &self.source
    }

    pub fn height(&self) -> usize {
        self.source.height()
    }

    pub fn width(&self) -> usize {
        self.source.width()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.width() + j]
    }

    /// Sum of all weights.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Fraction of each cell covered by the closed ellipse inscribed in the box
/// (center `(w/2, h/2)`, semi-axes `w/2` and `h/2`, in cell units).
///
/// Each cell is split into `s x s` sub-cells. Sub-cells entirely inside or
/// outside the ellipse count as 1 or 0; a sub-cell crossed by the boundary
/// contributes the part of it lying behind the tangent line at the boundary
/// point closest (radially, in normalized coordinates) to its center. The
/// error shrinks roughly as `1/s^2`; at `s = 32` a unit cell is within
/// `3e-4` of `pi/4`.
pub fn elliptical_mask(b: &PatchBox, supersample: usize) -> Result<ExemplarMask> {
    if supersample == 0 {
        return Err(Error::Argument("supersample must be at least 1".into()));
    }
    let (h, w) = (b.height(), b.width());
    let (ax, ay) = (w as f64 / 2.0, h as f64 / 2.0);
    let s = supersample;
    let step = 1.0 / s as f64;
    // sub-cell edges in normalized ellipse coordinates, per axis
    let edges_u: Vec<f64> = (0..=w * s).map(|k| (k as f64 * step - ax) / ax).collect();
    let edges_v: Vec<f64> = (0..=h * s).map(|k| (k as f64 * step - ay) / ay).collect();

    let mut weights = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for a in 0..s {
                let (v0, v1) = (edges_v[i * s + a], edges_v[i * s + a + 1]);
                for bx in 0..s {
                    let (u0, u1) = (edges_u[j * s + bx], edges_u[j * s + bx + 1]);
                    acc += subcell_coverage(u0, u1, v0, v1);
                }
            }
            weights[i * w + j] = acc / (s * s) as f64;
        }
    }
    Ok(ExemplarMask { weights, source: *b })
}

/// Coverage of `[u0, u1] x [v0, v1]` by the closed unit disk.
fn subcell_coverage(u0: f64, u1: f64, v0: f64, v1: f64) -> f64 {
    let far_u = u0.abs().max(u1.abs());
    let far_v = v0.abs().max(v1.abs());
    if far_u * far_u + far_v * far_v <= 1.0 {
        return 1.0;
    }
    let near = |lo: f64, hi: f64| if lo <= 0.0 && 0.0 <= hi { 0.0 } else { lo.abs().min(hi.abs()) };
    let (nu, nv) = (near(u0, u1), near(v0, v1));
    if nu * nu + nv * nv > 1.0 {
        return 0.0;
    }
    let (cu, cv) = ((u0 + u1) / 2.0, (v0 + v1) / 2.0);
    let r = cu.hypot(cv);
    if r == 0.0 {
        // boundary crosses a sub-cell centered on the ellipse center (s = 1)
        return std::f64::consts::FRAC_PI_4;
    }
    let n = (cu / r, cv / r);
    let corners = [(u0, v0), (u1, v0), (u1, v1), (u0, v1)];
    clipped_area(&corners, n, 1.0) / ((u1 - u0) * (v1 - v0))
}

/// Area of the convex polygon `poly` intersected with `{p : n . p <= d}`.
fn clipped_area(poly: &[(f64, f64)], n: (f64, f64), d: f64) -> f64 {
    let side = |p: (f64, f64)| n.0 * p.0 + n.1 * p.1 - d;
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(poly.len() + 1);
    for (k, &p) in poly.iter().enumerate() {
        let q = poly[(k + 1) % poly.len()];
        let (fp, fq) = (side(p), side(q));
        if fp <= 0.0 {
            kept.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let t = fp / (fp - fq);
            kept.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    let twice: f64 = (0..kept.len())
        .map(|k| {
            let (p, q) = (kept[k], kept[(k + 1) % kept.len()]);
            p.0 * q.1 - q.0 * p.1
        })
        .sum();
    twice.abs() / 2.0
}

/// Sum of exemplar masks placed at their boxes on a `rows x cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMask {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl GlobalMask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        GlobalMask {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    pub fn add(&mut self, mask: &ExemplarMask) -> Result<()> {
        let b = mask.source();
        if !b.fits(self.rows, self.cols) {
            return Err(Error::Geometry(format!(
                "exemplar box {b:?} exceeds the {}x{} grid",
                self.rows, self.cols
            )));
        }
        for i in 0..b.height() {
            let base = (b.row1 + i) * self.cols + b.col1;
            for j in 0..b.width() {
                self.weights[base + j] += mask.get(i, j);
            }
        }
        Ok(())
    }
}

/// Accumulates exemplar masks into a zero-initialized `rows x cols` map.
/// Overlapping exemplars add up.
pub fn accumulate_global_mask(masks: &[ExemplarMask], dims: (usize, usize)) -> Result<GlobalMask> {
    let mut global = GlobalMask::zeros(dims.0, dims.1);
    for m in masks {
        global.add(m)?;
    }
    Ok(global)
}
