use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{AnnotationRecord, Dataset, Failure, Split};
use crate::geometry::PixelBox;

/// How exemplars are drawn from a CARPK box list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExemplarSelection {
    /// The first `n` boxes in file order.
    Head(usize),
    /// `n` distinct boxes drawn with a seeded RNG, kept in file order.
    Random { n: usize, seed: u64 },
}

impl Default for ExemplarSelection {
    fn default() -> Self {
        ExemplarSelection::Head(3)
    }
}

/// Parses one CARPK annotation file: one `x1 y1 x2 y2 [class]` box per line,
/// separated by whitespace or commas. Blank lines are ignored.
pub fn parse_boxes(text: &str) -> Result<Vec<PixelBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let fields: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() < 4 {
                return Err(Error::Annotation(format!("line {}: expected x1 y1 x2 y2, got {line:?}", n + 1)));
            }
            let mut v = [0.0f64; 4];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse()
                    .map_err(|_| Error::Annotation(format!("line {}: bad number {f:?}", n + 1)))?;
            }
            PixelBox::new(v[0], v[1], v[2], v[3])
                .map_err(|e| Error::Annotation(format!("line {}: {e}", n + 1)))
        })
        .collect()
}

fn select(boxes: &[PixelBox], selection: ExemplarSelection) -> Vec<PixelBox> {
    match selection {
        ExemplarSelection::Head(n) => boxes.iter().take(n).copied().collect(),
        ExemplarSelection::Random { n, seed } => {
            let n = n.min(boxes.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, boxes.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| boxes[i]).collect()
        }
    }
}

/// Builds a record from the text of one annotation file.
pub fn record_from_text(
    image_id: &str,
    text: &str,
    split: Split,
    selection: ExemplarSelection,
) -> Result<AnnotationRecord> {
    let boxes = parse_boxes(text).map_err(|e| Error::Annotation(format!("{image_id}: {e}")))?;
    let exemplar_boxes = select(&boxes, selection);
    if exemplar_boxes.is_empty() {
        return Err(Error::Annotation(format!("{image_id}: no boxes to use as exemplars")));
    }
    Ok(AnnotationRecord {
        image_id: image_id.to_string(),
        exemplar_boxes,
        gt_count: boxes.len(),
        split,
    })
}

/// Parses a CARPK tree for one split.
///
/// `root` is either the dataset root (containing `Annotations/` and
/// `ImageSets/<split>.txt`) or a bare directory of `.txt` annotations, in
/// which case every file is used. Image ids are `<stem>.png`.
pub fn parse_carpk(root: impl AsRef<Path>, split: Split, selection: ExemplarSelection) -> Result<Dataset> {
    let root = root.as_ref();
    let ann_dir = if root.join("Annotations").is_dir() {
        root.join("Annotations")
    } else {
        root.to_path_buf()
    };
    let list = root.join("ImageSets").join(format!("{}.txt", split.as_str()));
    let stems: Vec<String> = if list.is_file() {
        std::fs::read_to_string(&list)
            .map_err(|e| Error::io(&list, e))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    } else {
        let mut stems: Vec<String> = std::fs::read_dir(&ann_dir)
            .map_err(|e| Error::io(&ann_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        stems.sort();
        stems
    };

    let mut dataset = Dataset::default();
    for stem in stems {
        let image_id = format!("{stem}.png");
        let path: PathBuf = ann_dir.join(format!("{stem}.txt"));
        let parsed = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(&path, e))
            .and_then(|text| record_from_text(&image_id, &text, split, selection));
        match parsed {
            Ok(rec) => dataset.records.push(rec),
            Err(e) => dataset.rejected.push(Failure {
                image_id,
                error: e.to_string(),
            }),
        }
    }
    Ok(dataset)
}
