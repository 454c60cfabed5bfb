use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensorio::{load_feature_map, FeatureMap};

/// Anything that can hand out the dense feature map of an image at a given
/// resolution level.
pub trait FeatureSource: Sync {
    fn features_for(&self, image_id: &str, resolution_level: u32) -> Result<FeatureMap>;
}

impl<S: FeatureSource + ?Sized> FeatureSource for &S {
    fn features_for(&self, image_id: &str, resolution_level: u32) -> Result<FeatureMap> {
        (**self).features_for(image_id, resolution_level)
    }
}

fn check_level(map: FeatureMap, image_id: &str, requested: u32) -> Result<FeatureMap> {
    if map.resolution_level() != requested {
        return Err(Error::Validation(format!(
            "features for {image_id} were exported at resolution level {}, requested {requested}",
            map.resolution_level()
        )));
    }
    Ok(map)
}

/// Reads CDFM files from a directory.
///
/// For image `foo.jpg` at level `k` the lookup order is
/// `<dir>/k<k>/foo.cdfm`, `<dir>/foo.cdfm`, `<dir>/foo.jpg.cdfm`. The file's
/// recorded resolution level must equal `k`.
#[derive(Debug, Clone)]
pub struct FileSource {
    dir: PathBuf,
}

impl FileSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileSource { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn candidates(&self, image_id: &str, resolution_level: u32) -> Vec<PathBuf> {
        let stem = Path::new(image_id)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| image_id.to_string());
        vec![
            self.dir
                .join(format!("k{resolution_level}"))
                .join(format!("{stem}.cdfm")),
            self.dir.join(format!("{stem}.cdfm")),
            self.dir.join(format!("{image_id}.cdfm")),
        ]
    }
}

impl FeatureSource for FileSource {
    fn features_for(&self, image_id: &str, resolution_level: u32) -> Result<FeatureMap> {
        let candidates = self.candidates(image_id, resolution_level);
        let path = candidates.iter().find(|p| p.is_file()).ok_or_else(|| {
            Error::io(
                &candidates[1],
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("no feature file for {image_id}"),
                ),
            )
        })?;
        check_level(load_feature_map(path)?, image_id, resolution_level)
    }
}

/// Feature maps held in memory, keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    maps: HashMap<String, FeatureMap>,
}

impl InMemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, map: FeatureMap) {
        self.maps.insert(image_id.into(), map);
    }

    pub fn with(mut self, image_id: impl Into<String>, map: FeatureMap) -> Self {
        self.insert(image_id, map);
        self
    }
}

impl FeatureSource for InMemorySource {
    fn features_for(&self, image_id: &str, resolution_level: u32) -> Result<FeatureMap> {
        let map = self
            .maps
            .get(image_id)
            .ok_or_else(|| Error::Argument(format!("no features for image {image_id}")))?;
        check_level(map.clone(), image_id, resolution_level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorio::save_feature_map;

    #[test]
    fn file_source_prefers_level_subdirectory() {
        let dir = tempfile::tempdir().unwrap();
        let flat = FeatureMap::new(vec![1.0], 1, 1, 1, 14).unwrap();
        let k1 = FeatureMap::new(vec![2.0], 1, 1, 1, 14)
            .unwrap()
            .with_resolution_level(1);
        save_feature_map(&flat, dir.path().join("7.cdfm")).unwrap();
        std::fs::create_dir(dir.path().join("k1")).unwrap();
        save_feature_map(&k1, dir.path().join("k1/7.cdfm")).unwrap();

        let src = FileSource::new(dir.path());
        assert_eq!(src.features_for("7.jpg", 0).unwrap().data(), &[1.0]);
        assert_eq!(src.features_for("7.jpg", 1).unwrap().data(), &[2.0]);
        assert!(src.features_for("8.jpg", 0).is_err());
    }

    #[test]
    fn level_mismatch_is_rejected() {
        let src = InMemorySource::new().with(
            "a",
            FeatureMap::new(vec![1.0], 1, 1, 1, 14).unwrap().with_resolution_level(2),
        );
        assert!(src.features_for("a", 2).is_ok());
        assert!(matches!(src.features_for("a", 0), Err(Error::Validation(_))));
    }
}
