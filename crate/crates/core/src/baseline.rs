//! Detection-filtering baseline: keep the externally detected boxes whose
//! pooled features are cosine-similar to the exemplar prototype, and count
//! them.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{snap_box, PixelBox};
use crate::tensorio::FeatureMap;

/// Default cosine-similarity threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: PixelBox,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

/// Mean feature vector over the cells covered by `b`.
pub fn pooled_feature(map: &FeatureMap, b: &PixelBox) -> Result<Vec<f64>> {
    let pb = snap_box(b, map.patch_size(), (map.rows(), map.cols()))?;
    let mut acc = vec![0.0f64; map.channels()];
    for r in pb.row1..pb.row2 {
        for c in pb.col1..pb.col2 {
            for (a, &v) in acc.iter_mut().zip(map.cell(r, c)) {
                *a += v as f64;
            }
        }
    }
    let n = pb.area() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Average of the exemplars' pooled features.
pub fn prototype(map: &FeatureMap, exemplars: &[PixelBox]) -> Result<Vec<f64>> {
    if exemplars.is_empty() {
        return Err(Error::Argument("prototype needs at least one exemplar".into()));
    }
    let mut proto = vec![0.0f64; map.channels()];
    for b in exemplars {
        for (p, v) in proto.iter_mut().zip(pooled_feature(map, b)?) {
            *p += v;
        }
    }
    let n = exemplars.len() as f64;
    proto.iter_mut().for_each(|p| *p /= n);
    Ok(proto)
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na * nb))
}

/// Similarity of every detection to the prototype, in input order. Entries
/// are `None` for zero-norm crops.
pub fn detection_similarities(
    map: &FeatureMap,
    detections: &DetectionSet,
    proto: &[f64],
) -> Result<Vec<Option<f64>>> {
    if proto.len() != map.channels() {
        return Err(Error::Shape(format!(
            "prototype has {} channels, feature map has {}",
            proto.len(),
            map.channels()
        )));
    }
    detections
        .detections
        .iter()
        .map(|d| Ok(cosine_similarity(&pooled_feature(map, &d.bbox)?, proto)))
        .collect()
}

/// Number of similarities strictly above `threshold`; `None` entries are
/// skipped.
pub fn count_above(similarities: &[Option<f64>], threshold: f64) -> usize {
    similarities
        .iter()
        .flatten()
        .filter(|&&s| s > threshold)
        .count()
}

/// Counts detections whose pooled feature has cosine similarity strictly
/// above `threshold` to `proto`. Zero-norm crops are skipped with a warning.
pub fn filter_count(
    map: &FeatureMap,
    detections: &DetectionSet,
    proto: &[f64],
    threshold: f64,
) -> Result<usize> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Argument(format!(
            "threshold must lie in [-1, 1], got {threshold}"
        )));
    }
    let sims = detection_similarities(map, detections, proto)?;
    for (d, s) in detections.detections.iter().zip(&sims) {
        if s.is_none() {
            warn!(
                "{}: detection {:?} has a zero-norm feature and is excluded",
                detections.image_id, d.bbox
            );
        }
    }
    Ok(count_above(&sims, threshold))
}

/// Parses a detections file: either a JSON object mapping image ids to
/// arrays of `[x1, y1, x2, y2, score]`, or a bare array for a single image
/// (keyed by `default_id`). The score is optional.
pub fn parse_detections(json: &str, default_id: &str) -> Result<Vec<DetectionSet>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        Single(Vec<Vec<f64>>),
        Many(BTreeMap<String, Vec<Vec<f64>>>),
    }
    let parsed: File = serde_json::from_str(json)?;
    let entries = match parsed {
        File::Single(rows) => vec![(default_id.to_string(), rows)],
        File::Many(map) => map.into_iter().collect(),
    };
    entries
        .into_iter()
        .map(|(image_id, rows)| {
            let detections = rows
                .iter()
                .map(|row| match row.as_slice() {
                    [x1, y1, x2, y2] => Ok(Detection {
                        bbox: PixelBox::new(*x1, *y1, *x2, *y2)?,
                        score: None,
                    }),
                    [x1, y1, x2, y2, s] => Ok(Detection {
                        bbox: PixelBox::new(*x1, *y1, *x2, *y2)?,
                        score: Some(*s),
                    }),
                    _ => Err(Error::Annotation(format!(
                        "{image_id}: detection {row:?} is not [x1, y1, x2, y2, score]"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DetectionSet {
                image_id,
                detections,
            })
        })
        .collect()
}

pub fn load_detections(path: impl AsRef<Path>, default_id: &str) -> Result<Vec<DetectionSet>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, default_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2x2 grid, P=10, D=2 with chosen cell vectors.
    fn map(cells: [[f32; 2]; 4]) -> FeatureMap {
        FeatureMap::new(cells.concat(), 2, 2, 2, 10).unwrap()
    }

    fn cell_box(r: usize, c: usize) -> PixelBox {
        let (x, y) = (c as f64 * 10.0, r as f64 * 10.0);
        PixelBox::new(x + 1.0, y + 1.0, x + 9.0, y + 9.0).unwrap()
    }

    fn dets(boxes: &[PixelBox]) -> DetectionSet {
        DetectionSet {
            image_id: "t".into(),
            detections: boxes
                .iter()
                .map(|&bbox| Detection { bbox, score: None })
                .collect(),
        }
    }

    #[test]
    fn prototype_examples() {
        let m = map([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(prototype(&m, &[cell_box(0, 1)]).unwrap(), vec![3.0, 4.0]);
        assert_eq!(
            prototype(&m, &[cell_box(0, 0), cell_box(1, 1)]).unwrap(),
            vec![4.0, 5.0]
        );
        let whole = PixelBox::new(0.0, 0.0, 20.0, 20.0).unwrap();
        assert_eq!(prototype(&m, &[whole]).unwrap(), vec![4.0, 5.0]);
        assert!(prototype(&m, &[]).is_err());
    }

    #[test]
    fn identical_crop_counts_orthogonal_does_not() {
        let m = map([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, 0.0]]);
        let proto = prototype(&m, &[cell_box(0, 0)]).unwrap();
        assert_eq!(filter_count(&m, &dets(&[cell_box(0, 0)]), &proto, 0.5).unwrap(), 1);
        assert_eq!(filter_count(&m, &dets(&[cell_box(0, 1)]), &proto, 0.5).unwrap(), 0);
        // scaled copy still counts, zero-norm crop is skipped
        assert_eq!(
            filter_count(&m, &dets(&[cell_box(1, 0), cell_box(1, 1)]), &proto, 0.5).unwrap(),
            1
        );
    }

    #[test]
    fn count_above_is_strict() {
        let sims = [Some(0.6), Some(0.4), Some(0.9)];
        assert_eq!(count_above(&sims, 0.5), 2);
        assert_eq!(count_above(&[Some(0.5)], 0.5), 0);
        assert_eq!(count_above(&[None, Some(1.0)], 0.5), 1);
    }

    #[test]
    fn threshold_outside_range_is_rejected() {
        let m = map([[1.0, 0.0]; 4]);
        assert!(filter_count(&m, &dets(&[]), &[1.0, 0.0], 1.5).is_err());
    }

    #[test]
    fn parses_both_detection_layouts() {
        let many = r#"{"a.jpg": [[0, 0, 10, 10, 0.9], [5, 5, 9, 9]], "b.jpg": []}"#;
        let sets = parse_detections(many, "x").unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].image_id, "a.jpg");
        assert_eq!(sets[0].detections[0].score, Some(0.9));
        assert_eq!(sets[0].detections[1].score, None);

        let single = "[[1, 2, 3, 4, 0.5]]";
        let sets = parse_detections(single, "img").unwrap();
        assert_eq!(sets[0].image_id, "img");

        assert!(parse_detections("[[1, 2, 3]]", "img").is_err());
    }
}
