use crate::error::{Error, Result};

/// Dense patch-feature tensor, row-major `(row, col, channel)`.
///
/// Besides the payload the map records the geometry of the image it was
/// computed from: `image_height`/`image_width` are the original pixel
/// dimensions and `effective_height`/`effective_width` the padded extent
/// that the retained patch grid covers (`rows * patch_size` by
/// `cols * patch_size`). Exemplar boxes are always expressed in original
/// pixel coordinates; the grid origin coincides with the image origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    rows: usize,
    cols: usize,
    channels: usize,
    patch_size: usize,
    image_height: usize,
    image_width: usize,
    effective_height: usize,
    effective_width: usize,
    resolution_level: u32,
    data: Vec<f32>,
}

impl FeatureMap {
    /// Builds a map whose image geometry is exactly the patch grid
    /// (`rows * patch_size` by `cols * patch_size`), at resolution level 0.
    pub fn new(
        data: Vec<f32>,
        rows: usize,
        cols: usize,
        channels: usize,
        patch_size: usize,
    ) -> Result<Self> {
        let map = FeatureMap {
            rows,
            cols,
            channels,
            patch_size,
            image_height: rows.saturating_mul(patch_size),
            image_width: cols.saturating_mul(patch_size),
            effective_height: rows.saturating_mul(patch_size),
            effective_width: cols.saturating_mul(patch_size),
            resolution_level: 0,
            data,
        };
        map.validate()?;
        Ok(map)
    }

    /// Builds a map from every header field at once. Used by the file reader.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        data: Vec<f32>,
        rows: usize,
        cols: usize,
        channels: usize,
        patch_size: usize,
        image_size: (usize, usize),
        effective_size: (usize, usize),
        resolution_level: u32,
    ) -> Result<Self> {
        let map = FeatureMap {
            rows,
            cols,
            channels,
            patch_size,
            image_height: image_size.0,
            image_width: image_size.1,
            effective_height: effective_size.0,
            effective_width: effective_size.1,
            resolution_level,
            data,
        };
        map.validate()?;
        Ok(map)
    }

    /// Records the original (unpadded) image size; it must fit inside the
    /// effective size.
    pub fn with_image_size(mut self, height: usize, width: usize) -> Result<Self> {
        self.image_height = height;
        self.image_width = width;
        self.validate()?;
        Ok(self)
    }

    pub fn with_resolution_level(mut self, level: u32) -> Self {
        self.resolution_level = level;
        self
    }

    /// Checks every invariant of the type.
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.channels == 0 {
            return Err(Error::Validation(format!(
                "feature map dims must be positive, got {}x{}x{}",
                self.rows, self.cols, self.channels
            )));
        }
        if self.patch_size == 0 {
            return Err(Error::Validation("patch size must be positive".into()));
        }
        let expected = self
            .rows
            .checked_mul(self.cols)
            .and_then(|n| n.checked_mul(self.channels))
            .ok_or_else(|| Error::Validation("feature map size overflows".into()))?;
        if self.data.len() != expected {
            return Err(Error::Validation(format!(
                "payload holds {} values, dims {}x{}x{} need {expected}",
                self.data.len(),
                self.rows,
                self.cols,
                self.channels
            )));
        }
        if self.effective_height.div_ceil(self.patch_size) != self.rows
            || self.effective_width.div_ceil(self.patch_size) != self.cols
        {
            return Err(Error::Validation(format!(
                "effective size {}x{} does not give a {}x{} grid at patch size {}",
                self.effective_height, self.effective_width, self.rows, self.cols, self.patch_size
            )));
        }
        if self.image_height == 0
            || self.image_width == 0
            || self.image_height > self.effective_height
            || self.image_width > self.effective_width
        {
            return Err(Error::Validation(format!(
                "image size {}x{} must be nonzero and within effective size {}x{}",
                self.image_height, self.image_width, self.effective_height, self.effective_width
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at flat index {pos}",
                self.data[pos]
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(rows, cols, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Original image `(height, width)` in pixels.
    pub fn image_size(&self) -> (usize, usize) {
        (self.image_height, self.image_width)
    }

    /// Padded extent `(height, width)` covered by the patch grid.
    pub fn effective_size(&self) -> (usize, usize) {
        (self.effective_height, self.effective_width)
    }

    pub fn resolution_level(&self) -> u32 {
        self.resolution_level
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.cols + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(row, col, channel)]
    }

    /// Feature vector of one cell.
    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = self.index(row, col, 0);
        &self.data[start..start + self.channels]
    }

    /// Returns a copy with every cell vector scaled to unit L2 norm.
    /// Zero vectors stay zero.
    pub fn l2_normalized(&self) -> FeatureMap {
        let mut out = self.clone();
        for cell in out.data.chunks_exact_mut(self.channels) {
            let norm = cell.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in cell.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
        out
    }

    /// Returns a copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> FeatureMap {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Keeps the leading `rows x cols` cells, updating the effective size.
    pub(crate) fn crop_leading(&self, rows: usize, cols: usize) -> Result<FeatureMap> {
        if rows == 0 || cols == 0 || rows > self.rows || cols > self.cols {
            return Err(Error::Shape(format!(
                "cannot crop {}x{} map to {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(rows * cols * self.channels);
        for r in 0..rows {
            let start = self.index(r, 0, 0);
            data.extend_from_slice(&self.data[start..start + cols * self.channels]);
        }
        let eff = (rows * self.patch_size, cols * self.patch_size);
        FeatureMap::from_parts(
            data,
            rows,
            cols,
            self.channels,
            self.patch_size,
            (self.image_height.min(eff.0), self.image_width.min(eff.1)),
            eff,
            self.resolution_level,
        )
    }
}
