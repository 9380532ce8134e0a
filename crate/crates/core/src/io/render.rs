//! Grayscale PNG rendering of heatmaps.

use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::folding::Heatmap;
use crate::scalar::Scalar;

/// Width `D`, height `P`; row 0 (first sample of the day) at the top and
/// column 0 (first day) at the left; pixel = round(255·value).
pub fn heatmap_image<T: Scalar>(h: &Heatmap<T>) -> Result<GrayImage> {
    if !h.normalized {
        return Err(Error::Config("only normalized heatmaps can be rendered".into()));
    }
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::Shape(format!("dimension {v} too large")));
    let mut img = GrayImage::new(to_u32(h.cols())?, to_u32(h.rows())?);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let v = h.get(y as usize, x as usize).to_f64().unwrap_or(0.0);
        *px = Luma([(255.0 * v).round().clamp(0.0, 255.0) as u8]);
    }
    Ok(img)
}

pub fn render_png<T: Scalar>(h: &Heatmap<T>, path: impl AsRef<Path>) -> Result<()> {
    heatmap_image(h)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Image(other.to_string()),
        })
}
