//! Caption providers for location-conditioned query text.

use std::collections::HashMap;
use std::path::Path;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::synth::sidecar::{read_sidecar, SidecarKey};
use crate::types::DetectionRecord;

/// The object a caption is requested for.
#[derive(Debug, Clone, Copy)]
pub struct CaptionRequest<'a> {
    pub image_id: &'a str,
    pub bbox: &'a BBox,
    pub category_name: &'a str,
}

impl<'a> From<&'a DetectionRecord> for CaptionRequest<'a> {
    fn from(r: &'a DetectionRecord) -> Self {
        CaptionRequest {
            image_id: &r.image_id,
            bbox: &r.bbox,
            category_name: &r.category_name,
        }
    }
}

/// Produces a non-empty, deterministic caption locating the object.
pub trait CaptionProvider: Send + Sync {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String>;
}

/// `The <classname> is in the image.`
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateProvider;

impl CaptionProvider for TemplateProvider {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String> {
        let name = req.category_name.trim();
        if name.is_empty() {
            return Err(Error::Validation("cannot caption an unnamed category".into()));
        }
        Ok(format!("The {name} is in the image."))
    }
}

/// Captions read from an `image_id<TAB>x,y,w,h<TAB>caption` file.
#[derive(Debug, Clone, Default)]
pub struct FileProvider {
    captions: HashMap<SidecarKey, String>,
}

impl FileProvider {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(FileProvider {
            captions: read_sidecar(path)?,
        })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (SidecarKey, String)>) -> Self {
        FileProvider {
            captions: entries.into_iter().collect(),
        }
    }
}

impl CaptionProvider for FileProvider {
    fn caption(&self, req: &CaptionRequest<'_>) -> Result<String> {
        match self.captions.get(&SidecarKey::new(req.image_id, req.bbox)) {
            Some(c) if !c.trim().is_empty() => Ok(c.trim().to_string()),
            Some(_) => Err(Error::Validation(format!(
                "empty caption for image {} box {}",
                req.image_id, req.bbox
            ))),
            None => Err(Error::Missing(format!(
                "no caption for image {} box {}",
                req.image_id, req.bbox
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_caption() {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0);
        let req = CaptionRequest { image_id: "1", bbox: &b, category_name: "kite" };
        assert_eq!(TemplateProvider.caption(&req).unwrap(), "The kite is in the image.");
        let empty = CaptionRequest { category_name: " ", ..req };
        assert!(TemplateProvider.caption(&empty).is_err());
    }

    #[test]
    fn file_caption_missing_and_blank() {
        let b = BBox::new(0.0, 0.0, 1.0, 1.0);
        let p = FileProvider::from_entries([
            (SidecarKey::new("1", &b), "The kite flies.".to_string()),
            (SidecarKey::new("2", &b), "  ".to_string()),
        ]);
        let req = |id| CaptionRequest { image_id: id, bbox: &b, category_name: "kite" };
        assert_eq!(p.caption(&req("1")).unwrap(), "The kite flies.");
        assert!(p.caption(&req("2")).is_err());
        assert!(matches!(p.caption(&req("3")), Err(Error::Missing(_))));
    }
}
