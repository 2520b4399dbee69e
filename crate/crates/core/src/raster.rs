//! In-memory RGB rasters, decoding and cropping.

use std::path::{Path, PathBuf};

use crate::bbox::{clamp_bbox, BBox};
use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::DimensionMismatch {
                expected: width as usize * height as usize * 3,
                actual: data.len(),
            });
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Raster::from_fn(width, height, |_, _| rgb)
    }

    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (width, height) = rgb.dimensions();
        Ok(Raster {
            width,
            height,
            data: rgb.into_raw(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Mean of each channel over the rectangle `[x0, x1) × [y0, y1)`, in `[0, 1]`.
    pub fn mean_rgb(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> [f64; 3] {
        let mut sum = [0u64; 3];
        for y in y0..y1 {
            let row = y as usize * self.width as usize;
            for x in x0..x1 {
                let i = (row + x as usize) * 3;
                for (s, &v) in sum.iter_mut().zip(&self.data[i..i + 3]) {
                    *s += u64::from(v);
                }
            }
        }
        let n = (u64::from(x1 - x0) * u64::from(y1 - y0)).max(1) as f64;
        sum.map(|s| s as f64 / (n * 255.0))
    }
}

/// Resolves image references relative to a root directory. Absolute
/// references are used as they are.
#[derive(Debug, Clone, Default)]
pub struct ImageRoot {
    root: PathBuf,
}

impl ImageRoot {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageRoot { root: root.into() }
    }

    pub fn resolve(&self, image: &str) -> PathBuf {
        self.root.join(image)
    }

    pub fn open(&self, image: &str) -> Result<Raster> {
        Raster::open(&self.resolve(image))
    }
}

/// Integer pixel rectangle `[left, right) × [top, bottom)` covering `bbox`.
/// Edges are rounded outward, then clamped to the image.
pub fn pixel_rect(bbox: &BBox, width: u32, height: u32) -> Result<(u32, u32, u32, u32)> {
    let clamped = clamp_bbox(bbox, f64::from(width), f64::from(height))?;
    let left = clamped.x.floor().max(0.0) as u32;
    let top = clamped.y.floor().max(0.0) as u32;
    let right = (clamped.right().ceil() as u32).min(width);
    let bottom = (clamped.bottom().ceil() as u32).min(height);
    if right <= left || bottom <= top {
        return Err(Error::InvalidGeometry(format!(
            "box {bbox} covers no pixels of a {width}x{height} image"
        )));
    }
    Ok((left, top, right, bottom))
}

/// Copies the pixels under `bbox` into a new raster.
pub fn crop_region(image: &Raster, bbox: &BBox) -> Result<Raster> {
    if image.is_empty() {
        return Err(Error::InvalidGeometry("cannot crop an empty raster".into()));
    }
    let (left, top, right, bottom) = pixel_rect(bbox, image.width, image.height)?;
    let w = right - left;
    let mut data = Vec::with_capacity(w as usize * (bottom - top) as usize * 3);
    for y in top..bottom {
        let start = (y as usize * image.width as usize + left as usize) * 3;
        data.extend_from_slice(&image.data[start..start + w as usize * 3]);
    }
    Ok(Raster {
        width: w,
        height: bottom - top,
        data,
    })
}
