//! Quadrant-tiled feature extraction around an opaque backbone.
//!
//! The image is padded (edge replication, right/bottom) to a multiple of
//! `2^k * P`, cut into `4^k` equal tiles, each tile is run through the
//! backbone independently, the leading non-patch tokens are dropped and the
//! per-tile grids are stitched back together. Trailing rows and columns that
//! only cover padding are cropped away.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensorio::{stitch_quadrants, FeatureMap, FeatureSource};

/// RGB image as `height x width x 3` floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Validation(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Validation(format!(
                "image {height}x{width}x3 needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    /// Converts 8-bit RGB to floats in `[0, 1]`.
    pub fn from_rgb8(image: &image::RgbImage) -> Result<Self> {
        let (w, h) = image.dimensions();
        let data = image.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        ImageTensor::new(h as usize, w as usize, data)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        ImageTensor::from_rgb8(&img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let at = (y * self.width + x) * 3;
        [self.data[at], self.data[at + 1], self.data[at + 2]]
    }

    /// Pads right/bottom to `height x width` by repeating the last row/column.
    pub fn pad_edge(&self, height: usize, width: usize) -> ImageTensor {
        assert!(height >= self.height && width >= self.width);
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            let sy = y.min(self.height - 1);
            for x in 0..width {
                let sx = x.min(self.width - 1);
                data.extend_from_slice(&self.pixel(sy, sx));
            }
        }
        ImageTensor {
            height,
            width,
            data,
        }
    }

    pub fn crop(&self, y: usize, x: usize, height: usize, width: usize) -> ImageTensor {
        assert!(y + height <= self.height && x + width <= self.width);
        let mut data = Vec::with_capacity(height * width * 3);
        for row in y..y + height {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        ImageTensor {
            height,
            width,
            data,
        }
    }
}

/// Token sequence emitted by a backbone for one tile: `tokens x dim`,
/// any class/register tokens first, then patch tokens in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTokens {
    pub tokens: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

/// A vision backbone seen as an opaque function from an image tile to
/// tokens. Implementations need not be reentrant; callers hold `&self` for
/// one tile at a time.
pub trait Backbone {
    fn patch_size(&self) -> usize;

    /// Runs one tile whose sides are multiples of `patch_size`.
    fn forward(&self, tile: &ImageTensor) -> Result<PatchTokens>;
}

impl<B: Backbone + ?Sized> Backbone for &B {
    fn patch_size(&self) -> usize {
        (**self).patch_size()
    }

    fn forward(&self, tile: &ImageTensor) -> Result<PatchTokens> {
        (**self).forward(tile)
    }
}

/// Dense features for `image` at resolution level `k`: pad, split into
/// `4^k` quadrants, run each, drop non-patch tokens, stitch, crop.
pub fn extract_tiled<B: Backbone + ?Sized>(
    backbone: &B,
    image: &ImageTensor,
    k: u32,
) -> Result<FeatureMap> {
    let p = backbone.patch_size();
    if p == 0 {
        return Err(Error::Backbone("backbone reports patch size 0".into()));
    }
    let side = 1usize
        .checked_shl(k)
        .filter(|&s| s <= 1 << 12)
        .ok_or_else(|| Error::Argument(format!("resolution level {k} is too large")))?;
    let unit = side * p;
    let padded_h = image.height().div_ceil(unit) * unit;
    let padded_w = image.width().div_ceil(unit) * unit;
    let padded = image.pad_edge(padded_h, padded_w);
    let (tile_h, tile_w) = (padded_h / side, padded_w / side);
    let (lq, vq) = (tile_h / p, tile_w / p);

    let mut quadrants = Vec::with_capacity(side * side);
    for qr in 0..side {
        for qc in 0..side {
            let tile = padded.crop(qr * tile_h, qc * tile_w, tile_h, tile_w);
            let out = backbone.forward(&tile)?;
            quadrants.push(tokens_to_grid(out, lq, vq, p)?);
        }
    }
    let stitched = stitch_quadrants(&quadrants, k)?;
    stitched
        .crop_leading(image.height().div_ceil(p), image.width().div_ceil(p))?
        .with_image_size(image.height(), image.width())
}

fn tokens_to_grid(out: PatchTokens, lq: usize, vq: usize, p: usize) -> Result<FeatureMap> {
    let patches = lq * vq;
    if out.dim == 0 || out.data.len() != out.tokens * out.dim {
        return Err(Error::Shape(format!(
            "backbone returned {} values for {} tokens of dim {}",
            out.data.len(),
            out.tokens,
            out.dim
        )));
    }
    if out.tokens < patches {
        return Err(Error::Shape(format!(
            "backbone returned {} tokens, a {lq}x{vq} tile needs at least {patches}",
            out.tokens
        )));
    }
    let skip = (out.tokens - patches) * out.dim;
    let data = out.data[skip..].to_vec();
    FeatureMap::new(data, lq, vq, out.dim, p)
}

/// Reference backbone whose patch token is the mean RGB of its patch,
/// optionally preceded by `prefix_tokens` constant class/register tokens.
/// Being patch-local, its tiled output is independent of `k`.
#[derive(Debug, Clone)]
pub struct PatchMeanBackbone {
    pub patch_size: usize,
    pub prefix_tokens: usize,
}

impl PatchMeanBackbone {
    pub fn new(patch_size: usize) -> Self {
        PatchMeanBackbone {
            patch_size,
            prefix_tokens: 0,
        }
    }

    pub fn with_prefix_tokens(mut self, n: usize) -> Self {
        self.prefix_tokens = n;
        self
    }
}

impl Backbone for PatchMeanBackbone {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn forward(&self, tile: &ImageTensor) -> Result<PatchTokens> {
        let p = self.patch_size;
        if !tile.height().is_multiple_of(p) || !tile.width().is_multiple_of(p) {
            return Err(Error::Backbone(format!(
                "tile {}x{} is not a multiple of patch {p}",
                tile.height(),
                tile.width()
            )));
        }
        let (rows, cols) = (tile.height() / p, tile.width() / p);
        let mut data = vec![-1.0f32; self.prefix_tokens * 3];
        let norm = (p * p) as f32;
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = [0.0f32; 3];
                for y in r * p..(r + 1) * p {
                    for x in c * p..(c + 1) * p {
                        let px = tile.pixel(y, x);
                        for ch in 0..3 {
                            acc[ch] += px[ch];
                        }
                    }
                }
                data.extend(acc.iter().map(|v| v / norm));
            }
        }
        Ok(PatchTokens {
            tokens: self.prefix_tokens + rows * cols,
            dim: 3,
            data,
        })
    }
}

/// Feature source that decodes `<images_dir>/<image_id>` and runs a backbone
/// on it. One backbone instance is used serially.
pub struct BackboneSource<B> {
    images_dir: PathBuf,
    backbone: std::sync::Mutex<B>,
}

impl<B: Backbone> BackboneSource<B> {
    pub fn new(images_dir: impl Into<PathBuf>, backbone: B) -> Self {
        BackboneSource {
            images_dir: images_dir.into(),
            backbone: std::sync::Mutex::new(backbone),
        }
    }
}

impl<B: Backbone + Send> FeatureSource for BackboneSource<B> {
    fn features_for(&self, image_id: &str, resolution_level: u32) -> Result<FeatureMap> {
        let image = ImageTensor::open(self.images_dir.join(image_id))?;
        let backbone = self
            .backbone
            .lock()
            .map_err(|_| Error::Backbone("backbone session poisoned".into()))?;
        extract_tiled(&*backbone, &image, resolution_level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> ImageTensor {
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&[y as f32 / h as f32, x as f32 / w as f32, ((x * 7 + y * 3) % 11) as f32 / 11.0]);
            }
        }
        ImageTensor::new(h, w, data).unwrap()
    }

    #[test]
    fn pad_edge_replicates_last_row_and_column() {
        let img = ImageTensor::new(1, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let padded = img.pad_edge(2, 3);
        assert_eq!(padded.pixel(1, 2), [0.4, 0.5, 0.6]);
        assert_eq!(padded.pixel(1, 0), [0.1, 0.2, 0.3]);
    }

    #[test]
    fn non_divisible_image_is_padded_then_cropped() {
        // 30 px -> padded to 42 = 3 patches of 14; no row is pure padding.
        let img = gradient_image(30, 30);
        let map = extract_tiled(&PatchMeanBackbone::new(14), &img, 0).unwrap();
        assert_eq!(map.dims(), (3, 3, 3));
        assert_eq!(map.image_size(), (30, 30));
        assert_eq!(map.effective_size(), (42, 42));

        // At k=1 the pad unit is 28, so 30 -> 56 = 4 patches; the 4th
        // row/column covers padding only and is cropped.
        let map1 = extract_tiled(&PatchMeanBackbone::new(14), &img, 1).unwrap();
        assert_eq!(map1.dims(), (3, 3, 3));
        assert_eq!(map1.effective_size(), (42, 42));
        assert_eq!(map1.data(), map.data());
    }

    #[test]
    fn level_two_uses_sixteen_single_patch_tiles() {
        use std::cell::Cell;
        struct Counting<'a>(PatchMeanBackbone, &'a Cell<usize>);
        impl Backbone for Counting<'_> {
            fn patch_size(&self) -> usize {
                self.0.patch_size
            }
            fn forward(&self, tile: &ImageTensor) -> Result<PatchTokens> {
                assert_eq!((tile.height(), tile.width()), (14, 14));
                self.1.set(self.1.get() + 1);
                self.0.forward(tile)
            }
        }
        let calls = Cell::new(0);
        let img = gradient_image(56, 56);
        let map = extract_tiled(&Counting(PatchMeanBackbone::new(14), &calls), &img, 2).unwrap();
        assert_eq!(calls.get(), 16);
        assert_eq!(map.dims(), (4, 4, 3));
        assert_eq!(map.resolution_level(), 2);
    }

    #[test]
    fn prefix_tokens_are_dropped() {
        let img = gradient_image(28, 42);
        let plain = extract_tiled(&PatchMeanBackbone::new(14), &img, 0).unwrap();
        let with_cls = extract_tiled(&PatchMeanBackbone::new(14).with_prefix_tokens(5), &img, 0).unwrap();
        assert_eq!(plain.data(), with_cls.data());
    }

    #[test]
    fn too_few_tokens_is_shape_error() {
        struct Short;
        impl Backbone for Short {
            fn patch_size(&self) -> usize {
                14
            }
            fn forward(&self, _: &ImageTensor) -> Result<PatchTokens> {
                Ok(PatchTokens {
                    tokens: 1,
                    dim: 2,
                    data: vec![0.0, 0.0],
                })
            }
        }
        let img = gradient_image(28, 28);
        assert!(matches!(extract_tiled(&Short, &img, 0), Err(Error::Shape(_))));
    }
}
