//! Axis-aligned boxes in absolute pixel coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A box stored as `(x, y, w, h)` in absolute pixels, `(x, y)` being the
/// top-left corner. Serialized as a 4-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Converts a box given in `[0, 1]` normalized coordinates.
    pub fn from_normalized(x: f64, y: f64, w: f64, h: f64, image_w: f64, image_h: f64) -> Self {
        BBox::new(x * image_w, y * image_h, w * image_w, h * image_h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Checks that every coordinate is finite and non-negative and that the
    /// box has positive area.
    pub fn validate(&self) -> Result<()> {
        let coords = [self.x, self.y, self.w, self.h];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry(format!("non-finite box {self}")));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidGeometry(format!("negative coordinate in box {self}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidGeometry(format!("zero-area box {self}")));
        }
        Ok(())
    }

    /// Checks [`BBox::validate`] plus containment in a `image_w × image_h` frame.
    pub fn validate_within(&self, image_w: f64, image_h: f64) -> Result<()> {
        self.validate()?;
        if self.right() > image_w || self.bottom() > image_h {
            return Err(Error::InvalidGeometry(format!(
                "box {self} exceeds {image_w}x{image_h} image"
            )));
        }
        Ok(())
    }

    /// Stable textual key `x,y,w,h` used by the sidecar formats.
    pub fn key(&self) -> String {
        format!("{},{},{},{}", self.x, self.y, self.w, self.h)
    }

    /// Parses the `x,y,w,h` sidecar form.
    pub fn parse_key(s: &str) -> Result<BBox> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("expected x,y,w,h but got {s:?}")));
        }
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad box coordinate {p:?}: {e}")))?;
        }
        Ok(BBox::from(v))
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.w, self.h)
    }
}

fn check_image_dims(image_w: f64, image_h: f64) -> Result<()> {
    if !(image_w.is_finite() && image_h.is_finite() && image_w > 0.0 && image_h > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "image dimensions must be positive, got {image_w}x{image_h}"
        )));
    }
    Ok(())
}

/// Intersects `bbox` with the image rectangle `[0, image_w] × [0, image_h]`.
pub fn clamp_bbox(bbox: &BBox, image_w: f64, image_h: f64) -> Result<BBox> {
    check_image_dims(image_w, image_h)?;
    let left = bbox.x.max(0.0);
    let top = bbox.y.max(0.0);
    let right = bbox.right().min(image_w);
    let bottom = bbox.bottom().min(image_h);
    if !(right > left && bottom > top) {
        return Err(Error::InvalidGeometry(format!(
            "box {bbox} does not intersect {image_w}x{image_h} image"
        )));
    }
    Ok(BBox::new(left, top, right - left, bottom - top))
}

/// Fraction of the image covered by the box, in `(0, 1]` for clamped boxes.
pub fn area_ratio(bbox: &BBox, image_w: f64, image_h: f64) -> Result<f64> {
    check_image_dims(image_w, image_h)?;
    bbox.validate()?;
    Ok(bbox.area() / (image_w * image_h))
}
