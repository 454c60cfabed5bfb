use std::collections::HashMap;
use std::path::Path;

use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{AnnotationRecord, Dataset, Failure, Split};
use crate::geometry::PixelBox;

/// The fields of one FSC-147 annotation entry that counting needs; the
/// rest of the public schema is ignored.
#[derive(Debug, Deserialize)]
struct Entry {
    box_examples_coordinates: Vec<Vec<[f64; 2]>>,
    points: Vec<[f64; 2]>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses an FSC-147 annotation JSON and split JSON for one split.
///
/// Exemplar boxes come from the min/max of each four-corner polygon and the
/// ground truth is the number of point annotations. Images listed in the
/// split but absent from the annotations are skipped with a warning; entries
/// with malformed boxes end up in `rejected`.
pub fn parse_fsc147(annotations: impl AsRef<Path>, splits: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    parse_fsc147_str(&read(annotations.as_ref())?, &read(splits.as_ref())?, split)
}

pub fn parse_fsc147_str(annotations: &str, splits: &str, split: Split) -> Result<Dataset> {
    let entries: HashMap<String, serde_json::Value> = serde_json::from_str(annotations)?;
    let splits: HashMap<String, Vec<String>> = serde_json::from_str(splits)?;
    let ids = splits
        .get(split.as_str())
        .ok_or_else(|| Error::Annotation(format!("split file has no \"{}\" list", split.as_str())))?;

    let mut dataset = Dataset::default();
    for id in ids {
        let Some(raw) = entries.get(id) else {
            warn!("{id} is listed in the {} split but has no annotation; skipped", split.as_str());
            continue;
        };
        match record_from_entry(id, raw, split) {
            Ok(rec) => dataset.records.push(rec),
            Err(e) => dataset.rejected.push(Failure {
                image_id: id.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(dataset)
}

fn record_from_entry(id: &str, raw: &serde_json::Value, split: Split) -> Result<AnnotationRecord> {
    let entry: Entry = serde_json::from_value(raw.clone())
        .map_err(|e| Error::Annotation(format!("{id}: {e}")))?;
    let exemplar_boxes = entry
        .box_examples_coordinates
        .iter()
        .map(|corners| {
            PixelBox::from_points(corners)
                .map_err(|e| Error::Annotation(format!("{id}: malformed exemplar box: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if exemplar_boxes.is_empty() {
        return Err(Error::Annotation(format!("{id}: no exemplar boxes")));
    }
    Ok(AnnotationRecord {
        image_id: id.to_string(),
        exemplar_boxes,
        gt_count: entry.points.len(),
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ANN: &str = r#"{
        "1.jpg": {
            "H": 384, "W": 512,
            "box_examples_coordinates": [[[10, 20], [50, 20], [50, 60], [10, 60]]],
            "points": [[1, 1], [2, 2], [3, 3], [4, 4], [5, 5], [6, 6], [7, 7]]
        },
        "2.jpg": {
            "box_examples_coordinates": [[[10, 20], [10, 20], [10, 20], [10, 20]]],
            "points": []
        },
        "3.jpg": {
            "box_examples_coordinates": [[[0, 0], [8, 0], [8, 8], [0, 8]], [[20, 20], [30, 20], [30, 35], [20, 35]]],
            "points": [[1, 1]]
        }
    }"#;
    const SPLITS: &str = r#"{"train": ["3.jpg"], "val": [], "test": ["1.jpg", "2.jpg", "9.jpg"]}"#;

    #[test]
    fn converts_corners_and_counts_points() {
        let ds = parse_fsc147_str(ANN, SPLITS, Split::Test).unwrap();
        assert_eq!(ds.records.len(), 1);
        let rec = &ds.records[0];
        assert_eq!(rec.image_id, "1.jpg");
        assert_eq!(rec.exemplar_boxes, vec![PixelBox::new(10.0, 20.0, 50.0, 60.0).unwrap()]);
        assert_eq!(rec.gt_count, 7);
        assert_eq!(rec.split, Split::Test);
    }

    #[test]
    fn degenerate_box_is_record_error_and_missing_image_skipped() {
        let ds = parse_fsc147_str(ANN, SPLITS, Split::Test).unwrap();
        assert_eq!(ds.rejected.len(), 1);
        assert_eq!(ds.rejected[0].image_id, "2.jpg");
    }

    #[test]
    fn other_split() {
        let ds = parse_fsc147_str(ANN, SPLITS, Split::Train).unwrap();
        assert_eq!(ds.records[0].exemplar_boxes.len(), 2);
        assert!(parse_fsc147_str(ANN, r#"{"test": []}"#, Split::Val).is_err());
    }
}
