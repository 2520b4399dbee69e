//! Tab-separated `image_id<TAB>x,y,w,h<TAB>value` sidecar files.

use std::collections::HashMap;
use std::path::Path;

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// Exact-match key: image id plus the bit patterns of the box coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SidecarKey {
    image_id: String,
    bbox_bits: [u64; 4],
}

impl SidecarKey {
    pub fn new(image_id: &str, bbox: &BBox) -> Self {
        // + 0.0 folds -0.0 into 0.0
        let bits = |v: f64| (v + 0.0).to_bits();
        SidecarKey {
            image_id: image_id.to_string(),
            bbox_bits: [bits(bbox.x), bits(bbox.y), bits(bbox.w), bits(bbox.h)],
        }
    }
}

pub fn read_sidecar(path: &Path) -> Result<HashMap<SidecarKey, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sidecar(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn parse_sidecar(text: &str) -> Result<HashMap<SidecarKey, String>> {
    let mut map = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(bbox), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Format(format!(
                "line {}: expected image_id<TAB>x,y,w,h<TAB>value",
                idx + 1
            )));
        };
        let bbox = BBox::parse_key(bbox)
            .map_err(|e| Error::Format(format!("line {}: {e}", idx + 1)))?;
        map.insert(SidecarKey::new(id, &bbox), value.to_string());
    }
    Ok(map)
}

pub fn format_line(image_id: &str, bbox: &BBox, value: &str) -> String {
    format!("{image_id}\t{}\t{value}", bbox.key())
}
