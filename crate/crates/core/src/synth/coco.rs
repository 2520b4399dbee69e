//! Loader for COCO-style detection annotation files.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use crate::bbox::{clamp_bbox, BBox};
use crate::error::{Error, Result};
use crate::types::{DetectionRecord, Split};

#[derive(Debug, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: Value,
    file_name: String,
    width: u32,
    height: u32,
    #[serde(default)]
    split: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    image_id: Value,
    category_id: i64,
    bbox: [f64; 4],
}

#[derive(Debug, Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
}

/// An annotation that could not become a [`DetectionRecord`].
#[derive(Debug)]
pub struct Rejected {
    /// Position in the `annotations` array.
    pub index: usize,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct Annotations {
    pub records: Vec<DetectionRecord>,
    pub rejected: Vec<Rejected>,
}

impl Annotations {
    pub fn split(&self, split: Split) -> Vec<DetectionRecord> {
        self.records.iter().filter(|r| r.split == split).cloned().collect()
    }
}

fn id_string(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::Format(format!("unsupported id {other}"))),
    }
}

/// Reads a COCO annotation file. Images without a `split` field get
/// `default_split`. Boxes are clamped to their image; annotations whose box
/// is empty after clamping, or that reference unknown images or categories,
/// are returned in [`Annotations::rejected`].
pub fn load_coco(path: &Path, default_split: Split) -> Result<Annotations> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: CocoFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse(file, default_split)
}

pub fn parse_coco(json: &str, default_split: Split) -> Result<Annotations> {
    let file: CocoFile = serde_json::from_str(json)?;
    parse(file, default_split)
}

fn parse(file: CocoFile, default_split: Split) -> Result<Annotations> {
    let categories: HashMap<i64, String> =
        file.categories.into_iter().map(|c| (c.id, c.name)).collect();
    let mut images = HashMap::with_capacity(file.images.len());
    for img in file.images {
        let split = match &img.split {
            Some(s) => s.parse()?,
            None => default_split,
        };
        images.insert(id_string(&img.id)?, (img, split));
    }

    let mut out = Annotations::default();
    for (index, ann) in file.annotations.into_iter().enumerate() {
        match to_record(&ann, &images, &categories) {
            Ok(r) => out.records.push(r),
            Err(error) => out.rejected.push(Rejected { index, error }),
        }
    }
    Ok(out)
}

fn to_record(
    ann: &CocoAnnotation,
    images: &HashMap<String, (CocoImage, Split)>,
    categories: &HashMap<i64, String>,
) -> Result<DetectionRecord> {
    let image_id = id_string(&ann.image_id)?;
    let (img, split) = images
        .get(&image_id)
        .ok_or_else(|| Error::Validation(format!("annotation references unknown image {image_id}")))?;
    let category_name = categories
        .get(&ann.category_id)
        .ok_or_else(|| Error::Validation(format!("unknown category id {}", ann.category_id)))?;
    let raw = BBox::from(ann.bbox);
    raw.validate()?;
    let bbox = clamp_bbox(&raw, f64::from(img.width), f64::from(img.height))?;
    let record = DetectionRecord {
        image_id,
        image_path: img.file_name.clone(),
        image_w: img.width,
        image_h: img.height,
        bbox,
        category_id: ann.category_id,
        category_name: category_name.clone(),
        split: *split,
    };
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "images": [
            {"id": 1, "file_name": "a.png", "width": 100, "height": 80},
            {"id": "b", "file_name": "b.png", "width": 50, "height": 50, "split": "val"}
        ],
        "annotations": [
            {"id": 10, "image_id": 1, "category_id": 3, "bbox": [10, 10, 20, 30], "iscrowd": 0},
            {"id": 11, "image_id": 1, "category_id": 3, "bbox": [90, 70, 30, 30]},
            {"id": 12, "image_id": "b", "category_id": 4, "bbox": [0, 0, 0, 10]},
            {"id": 13, "image_id": 9, "category_id": 3, "bbox": [0, 0, 5, 5]},
            {"id": 14, "image_id": "b", "category_id": 4, "bbox": [5, 5, 10, 10]}
        ],
        "categories": [{"id": 3, "name": "dog"}, {"id": 4, "name": "cat"}]
    }"#;

    #[test]
    fn loads_records_and_rejections() {
        let a = parse_coco(DOC, Split::Train).unwrap();
        assert_eq!(a.records.len(), 3);
        assert_eq!(a.records[0].image_id, "1");
        assert_eq!(a.records[0].category_name, "dog");
        // clamped to the frame
        assert_eq!(a.records[1].bbox, BBox::new(90.0, 70.0, 10.0, 10.0));
        assert_eq!(a.records[2].split, Split::Val);
        let rejected: Vec<usize> = a.rejected.iter().map(|r| r.index).collect();
        assert_eq!(rejected, vec![2, 3]);
        assert!(matches!(a.rejected[0].error, Error::InvalidGeometry(_)));
        assert_eq!(a.split(Split::Val).len(), 1);
        assert_eq!(a.split(Split::Train).len(), 2);
    }
}
