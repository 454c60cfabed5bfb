//! End-to-end counting for one image, plus density-map export.

use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{density_head, DensityMap, DensityOutput, ExemplarSet};
use crate::error::{Error, Result};
use crate::geometry::{
    accumulate_global_mask, elliptical_mask, snap_box, ExemplarMask, PatchBox, PixelBox,
    DEFAULT_SUPERSAMPLE,
};
use crate::matching::{aggregate, correlate, extract_kernel, SimilarityMap};
use crate::tensorio::{FeatureMap, FeatureSource};

/// What to do when an image yields a constant similarity map or no
/// response on its exemplars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegeneratePolicy {
    /// Return the error.
    #[default]
    Error,
    /// Report a count of zero and log a warning.
    ZeroCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Quadrant recursion depth `k`; features come from `4^k` tiles.
    pub resolution_level: u32,
    /// Weight exemplar crops and the normalization mask by ellipse coverage.
    pub apply_ellipse: bool,
    /// Zero background cells below the unit count of the largest exemplar.
    pub apply_threshold: bool,
    /// L2-normalize every feature vector before matching.
    pub normalize_features: bool,
    pub supersample: usize,
    pub degenerate_policy: DegeneratePolicy,
    /// Exemplars beyond this many are ignored (annotation order is kept).
    pub max_exemplars: usize,
    /// Keep both density maps in the result (needed for export).
    pub keep_density: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            resolution_level: 2,
            apply_ellipse: true,
            apply_threshold: true,
            normalize_features: false,
            supersample: DEFAULT_SUPERSAMPLE,
            degenerate_policy: DegeneratePolicy::Error,
            max_exemplars: 3,
            keep_density: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.supersample == 0 {
            return Err(Error::Argument("supersample must be at least 1".into()));
        }
        if self.max_exemplars == 0 {
            return Err(Error::Argument("max_exemplars must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-image prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    pub image_id: String,
    pub count: f64,
    pub raw_count: f64,
    pub z: f64,
    pub tau: f64,
    pub n_exemplars: usize,
    pub exemplar_boxes: Vec<PatchBox>,
    #[serde(skip)]
    pub density: Option<DensityOutput>,
}

/// Fetches the features of `image_id` and counts the objects that look like
/// the given exemplars.
pub fn count_image<S: FeatureSource + ?Sized>(
    source: &S,
    image_id: &str,
    exemplars: &[PixelBox],
    cfg: &PipelineConfig,
) -> Result<CountResult> {
    cfg.validate()?;
    let map = source.features_for(image_id, cfg.resolution_level)?;
    count_with_features(&map, image_id, exemplars, cfg)
}

/// Same as [`count_image`] on an already loaded feature map. The map's own
/// resolution level is used as is.
pub fn count_with_features(
    map: &FeatureMap,
    image_id: &str,
    exemplars: &[PixelBox],
    cfg: &PipelineConfig,
) -> Result<CountResult> {
    cfg.validate()?;
    if exemplars.is_empty() {
        return Err(Error::Argument(format!("{image_id}: at least one exemplar box is required")));
    }
    let exemplars = &exemplars[..exemplars.len().min(cfg.max_exemplars)];

    let normalized;
    let map = if cfg.normalize_features {
        normalized = map.l2_normalized();
        &normalized
    } else {
        map
    };
    let grid = (map.rows(), map.cols());

    let boxes = exemplars
        .iter()
        .map(|b| snap_box(b, map.patch_size(), grid))
        .collect::<Result<Vec<_>>>()?;
    let masks = boxes
        .iter()
        .map(|b| {
            if cfg.apply_ellipse {
                elliptical_mask(b, cfg.supersample)
            } else {
                Ok(ExemplarMask::uniform(*b))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let maps = boxes
        .par_iter()
        .zip(masks.par_iter())
        .map(|(b, m)| correlate(map, &extract_kernel(map, b, m, cfg.apply_ellipse)?))
        .collect::<Result<Vec<SimilarityMap>>>()?;
    let similarity = aggregate(&maps)?;
    let gmask = accumulate_global_mask(&masks, grid)?;
    let set = ExemplarSet::new(boxes.clone())?;

    match density_head(&similarity, &gmask, &set, cfg.apply_threshold) {
        Ok(out) => Ok(CountResult {
            image_id: image_id.to_string(),
            count: out.final_map.count,
            raw_count: out.final_map.raw_count,
            z: out.final_map.z,
            tau: out.final_map.tau,
            n_exemplars: boxes.len(),
            exemplar_boxes: boxes,
            density: cfg.keep_density.then_some(out),
        }),
        Err(e) if e.is_degenerate() && cfg.degenerate_policy == DegeneratePolicy::ZeroCount => {
            warn!("{image_id}: {e}; reporting a count of 0");
            let tau = if cfg.apply_threshold {
                crate::density::threshold(&set)
            } else {
                0.0
            };
            Ok(CountResult {
                image_id: image_id.to_string(),
                count: 0.0,
                raw_count: 0.0,
                z: 0.0,
                tau,
                n_exemplars: boxes.len(),
                exemplar_boxes: boxes,
                density: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// Grayscale rendering with `max -> 255`, scaled linearly and floored.
/// An all-zero map renders black.
pub fn density_to_gray(map: &DensityMap) -> image::GrayImage {
    let max = map.values.iter().cloned().fold(0.0f64, f64::max);
    image::GrayImage::from_fn(map.cols as u32, map.rows as u32, |x, y| {
        let v = map.get(y as usize, x as usize);
        let level = if max > 0.0 {
            (v / max * 255.0).floor().clamp(0.0, 255.0)
        } else {
            0.0
        };
        image::Luma([level as u8])
    })
}

pub fn write_density_png(map: &DensityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    density_to_gray(map)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })
}

/// One CSV row per grid row, no header. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_density_csv(map: &DensityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for row in map.values.chunks(map.cols) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a density CSV back as `(rows, cols, values)`.
pub fn read_density_csv(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for record in r.records() {
        let record = record?;
        cols = record.len();
        for field in record.iter() {
            values.push(field.trim().parse::<f64>().map_err(|e| {
                Error::Validation(format!("{}: bad value {field:?}: {e}", path.display()))
            })?);
        }
        rows += 1;
    }
    Ok((rows, cols, values))
}

fn file_stem(image_id: &str) -> String {
    Path::new(image_id)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "image".to_string())
}

/// Writes `<stem>_density.{csv,png}` for the final map and, when
/// `include_unthresholded`, `<stem>_density_raw.{csv,png}` for the map
/// before background thresholding. Returns the written paths.
pub fn export_density(
    result: &CountResult,
    out_dir: impl AsRef<Path>,
    include_unthresholded: bool,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    if out_dir.as_os_str().is_empty() {
        return Err(Error::io(
            out_dir,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty output path"),
        ));
    }
    let density = result.density.as_ref().ok_or_else(|| {
        Error::Argument(format!(
            "{}: density maps were not retained (enable keep_density)",
            result.image_id
        ))
    })?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = file_stem(&result.image_id);
    let mut written = Vec::new();
    let mut variants = vec![("density", &density.final_map)];
    if include_unthresholded {
        variants.push(("density_raw", &density.unthresholded));
    }
    for (suffix, map) in variants {
        let csv_path = out_dir.join(format!("{stem}_{suffix}.csv"));
        write_density_csv(map, &csv_path)?;
        let png_path = out_dir.join(format!("{stem}_{suffix}.png"));
        write_density_png(map, &png_path)?;
        written.push(csv_path);
        written.push(png_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{planted_scene, SceneSpec};
    use crate::tensorio::InMemorySource;

    fn density(rows: usize, cols: usize, values: Vec<f64>) -> DensityMap {
        let s = values.iter().sum();
        DensityMap {
            rows,
            cols,
            values,
            z: 1.0,
            tau: 0.0,
            raw_count: s,
            count: s,
        }
    }

    /// Two 3x3 planted objects, noise free; the exemplar is the first one.
    fn two_object_map() -> (FeatureMap, PixelBox) {
        let spec = SceneSpec {
            patch_size: 10,
            ..Default::default()
        };
        let scene = planted_scene(2, &spec).unwrap();
        (scene.map, scene.objects[0])
    }

    #[test]
    fn counts_two_planted_objects() {
        let (map, exemplar) = two_object_map();
        let cfg = PipelineConfig {
            resolution_level: 0,
            ..Default::default()
        };
        let boxes = [exemplar];
        let res = count_with_features(&map, "a", &boxes, &cfg).unwrap();
        assert!((res.count - 2.0).abs() < 1e-9, "count {}", res.count);
        assert_eq!(res.tau, 1.0 / 9.0);
        assert_eq!(res.n_exemplars, 1);
    }

    #[test]
    fn truncates_to_max_exemplars_in_order() {
        let (map, exemplar) = two_object_map();
        let cfg = PipelineConfig {
            resolution_level: 0,
            ..Default::default()
        };
        let boxes = vec![exemplar; 5];
        let res = count_with_features(&map, "a", &boxes, &cfg).unwrap();
        assert_eq!(res.n_exemplars, 3);
        assert_eq!(res.exemplar_boxes.len(), 3);
    }

    #[test]
    fn no_threshold_count_is_raw_count() {
        let (map, exemplar) = two_object_map();
        let boxes = [exemplar];
        let on = PipelineConfig {
            resolution_level: 0,
            ..Default::default()
        };
        let off = PipelineConfig {
            apply_threshold: false,
            ..on.clone()
        };
        let a = count_with_features(&map, "a", &boxes, &on).unwrap();
        let b = count_with_features(&map, "a", &boxes, &off).unwrap();
        assert_eq!(b.count, b.raw_count);
        assert!(b.count >= a.count);
    }

    #[test]
    fn degenerate_policy() {
        let map = FeatureMap::new(vec![1.0; 9], 3, 3, 1, 10).unwrap();
        let boxes = [PixelBox::new(0.0, 0.0, 10.0, 10.0).unwrap()];
        let strict = PipelineConfig {
            resolution_level: 0,
            ..Default::default()
        };
        let err = count_with_features(&map, "flat", &boxes, &strict).unwrap_err();
        assert!(err.is_degenerate());

        let lenient = PipelineConfig {
            degenerate_policy: DegeneratePolicy::ZeroCount,
            ..strict
        };
        let res = count_with_features(&map, "flat", &boxes, &lenient).unwrap();
        assert_eq!(res.count, 0.0);
    }

    #[test]
    fn count_image_checks_resolution_level() {
        let (map, exemplar) = two_object_map();
        let src = InMemorySource::new().with("a", map);
        let boxes = [exemplar];
        assert!(count_image(&src, "a", &boxes, &PipelineConfig::default()).is_err());
        let cfg = PipelineConfig {
            resolution_level: 0,
            ..Default::default()
        };
        assert!(count_image(&src, "a", &boxes, &cfg).is_ok());
    }

    #[test]
    fn empty_exemplars_are_rejected() {
        let cfg = PipelineConfig::default();
        assert!(matches!(
            count_with_features(&two_object_map().0, "a", &[], &cfg),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn png_scaling_floors() {
        let img = density_to_gray(&density(2, 2, vec![0.0, 1.0, 2.0, 4.0]));
        assert_eq!(img.as_raw(), &[0, 63, 127, 255]);
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let map = density(2, 3, vec![0.0, 1.0 / 3.0, 2.5e-7, 12345.678, 0.1, 1.0]);
        let path = dir.path().join("d.csv");
        write_density_csv(&map, &path).unwrap();
        let (rows, cols, values) = read_density_csv(&path).unwrap();
        assert_eq!((rows, cols), (2, 3));
        for (a, b) in values.iter().zip(&map.values) {
            assert!((a - b).abs() <= 1e-6 * b.abs());
        }
    }

    #[test]
    fn export_writes_both_variants() {
        let dir = tempfile::tempdir().unwrap();
        let (map, exemplar) = two_object_map();
        let cfg = PipelineConfig {
            resolution_level: 0,
            keep_density: true,
            ..Default::default()
        };
        let boxes = [exemplar];
        let res = count_with_features(&map, "img/12.jpg", &boxes, &cfg).unwrap();
        let written = export_density(&res, dir.path(), true).unwrap();
        assert_eq!(written.len(), 4);
        assert!(dir.path().join("12_density.png").is_file());
        assert!(dir.path().join("12_density_raw.csv").is_file());
        let png = image::open(dir.path().join("12_density.png")).unwrap().to_luma8();
        assert_eq!(png.dimensions(), (map.cols() as u32, map.rows() as u32));
    }

    #[test]
    fn export_to_empty_path_is_io_error() {
        let (map, exemplar) = two_object_map();
        let cfg = PipelineConfig {
            resolution_level: 0,
            keep_density: true,
            ..Default::default()
        };
        let boxes = [exemplar];
        let res = count_with_features(&map, "a", &boxes, &cfg).unwrap();
        assert!(matches!(export_density(&res, "", false), Err(Error::Io { .. })));
    }
}
