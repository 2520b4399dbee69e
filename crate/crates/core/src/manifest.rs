//! Triplet manifest: one [`TrainingTriplet`] JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jsonl;
use crate::synth::templates;
use crate::types::{ImageRef, TrainingTriplet};

pub fn read_manifest(path: &Path) -> Result<Vec<TrainingTriplet>> {
    jsonl::read_jsonl(path)
}

pub fn write_manifest(path: &Path, triplets: &[TrainingTriplet]) -> Result<usize> {
    jsonl::write_jsonl(path, triplets)
}

/// A manifest line that breaks a record invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Collects every invariant breach in the manifest at `path`. Malformed
/// lines become violations; only an unreadable file is an error.
pub fn validate_manifest(path: &Path) -> Result<Vec<Violation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut violations = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        match serde_json::from_str::<TrainingTriplet>(&line) {
            Ok(t) => violations.extend(
                triplet_violations(&t)
                    .into_iter()
                    .map(|reason| Violation { line: lineno, reason }),
            ),
            Err(e) => violations.push(Violation {
                line: lineno,
                reason: format!("parse error: {e}"),
            }),
        }
    }
    Ok(violations)
}

/// Invariant checks for a single triplet; empty when the triplet is clean.
pub fn triplet_violations(t: &TrainingTriplet) -> Vec<String> {
    let mut out = Vec::new();
    if !templates::has_instruction_prefix(&t.query_text) {
        out.push("query_text does not start with a query instruction".to_string());
    }
    if t.category_name.trim().is_empty() {
        out.push("empty category_name".to_string());
    }
    if t.source.trim().is_empty() {
        out.push("empty source".to_string());
    }
    check_ref("query_image", &t.query_image, &mut out);
    check_ref("positive_image", &t.positive_image, &mut out);

    match &t.positive_image {
        ImageRef::Full { image: positive, .. } => match &t.query_image {
            ImageRef::Crop { image, .. } | ImageRef::Full { image, .. } if image != positive => {
                out.push(format!(
                    "positive_image {positive:?} is not the crop source {image:?}"
                ));
            }
            _ => {}
        },
        _ => out.push("positive_image must reference a whole image".to_string()),
    }
    out
}

fn check_ref(field: &str, r: &ImageRef, out: &mut Vec<String>) {
    match r {
        ImageRef::Full { image, .. } | ImageRef::Crop { image, .. } if image.is_empty() => {
            out.push(format!("{field} has an empty image reference"));
        }
        ImageRef::Patch { patch } if patch.is_empty() => {
            out.push(format!("{field} has an empty patch path"));
        }
        _ => {}
    }
    if let ImageRef::Crop { bbox, .. } = r {
        if let Err(e) = bbox.validate() {
            out.push(format!("{field}: {e}"));
        }
    }
    if let Some(f) = r.features() {
        if f.is_empty() || f.iter().any(|v| !v.is_finite()) {
            out.push(format!("{field} features must be non-empty and finite"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;
    use std::io::Write;

    fn triplet(i: usize) -> TrainingTriplet {
        let image = format!("img/{i}.png");
        TrainingTriplet {
            query_image: ImageRef::Crop {
                image: image.clone(),
                bbox: BBox::new(1.0, 2.0, 10.0, 12.0),
                features: None,
            },
            query_text: templates::location_query("The cup is on the table.").unwrap(),
            positive_image: ImageRef::full(image),
            category_name: "cup".into(),
            source: "coco".into(),
            caption: "The cup is on the table.".into(),
        }
    }

    fn write_lines(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn clean_manifest_has_no_violations() {
        let lines: Vec<String> = (0..10)
            .map(|i| serde_json::to_string(&triplet(i)).unwrap())
            .collect();
        let f = write_lines(&lines);
        assert!(validate_manifest(f.path()).unwrap().is_empty());
    }

    #[test]
    fn mismatched_positive_is_flagged() {
        let mut t = triplet(0);
        t.positive_image = ImageRef::full("img/other.png");
        let lines = vec![
            serde_json::to_string(&triplet(1)).unwrap(),
            serde_json::to_string(&t).unwrap(),
        ];
        let v = validate_manifest(write_lines(&lines).path()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, 2);
        assert!(v[0].reason.contains("crop source"));
    }

    #[test]
    fn negative_width_is_flagged_at_its_line() {
        let mut bad = serde_json::to_value(triplet(2)).unwrap();
        bad["query_image"]["bbox"] = serde_json::json!([1.0, 2.0, -3.0, 4.0]);
        let lines = vec![
            serde_json::to_string(&triplet(0)).unwrap(),
            serde_json::to_string(&triplet(1)).unwrap(),
            bad.to_string(),
        ];
        let v = validate_manifest(write_lines(&lines).path()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, 3);
    }

    #[test]
    fn malformed_line_is_reported_not_fatal() {
        let lines = vec![
            "{not json".to_string(),
            serde_json::to_string(&triplet(0)).unwrap(),
            r#"{"query_image":"a"}"#.to_string(),
        ];
        let v = validate_manifest(write_lines(&lines).path()).unwrap();
        assert_eq!(v.iter().map(|v| v.line).collect::<Vec<_>>(), vec![1, 3]);
        assert!(v.iter().all(|v| v.reason.starts_with("parse error")));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = validate_manifest(Path::new("/nonexistent/manifest.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn patch_query_skips_source_rule() {
        let mut t = triplet(0);
        t.query_image = ImageRef::Patch {
            patch: "patches/0.png".into(),
        };
        assert!(triplet_violations(&t).is_empty());
        t.query_text = "find it".into();
        assert_eq!(triplet_violations(&t).len(), 1);
    }
}
