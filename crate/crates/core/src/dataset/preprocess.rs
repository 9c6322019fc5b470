use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::raster::ImageTensor;

/// Side length of the canonical square working image.
pub const CANONICAL_SIZE: usize = 64;

/// Decodes an 8-bit PNG or JPEG and converts it to the canonical tensor.
pub fn preprocess(bytes: &[u8]) -> Result<ImageTensor> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::data(format!("cannot decode image: {e}")))?;
    preprocess_image(&img)
}

/// Luma conversion, scaling to `[0, 1]`, center square crop and bilinear
/// resize to `CANONICAL_SIZE`.
pub fn preprocess_image(img: &DynamicImage) -> Result<ImageTensor> {
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels: Vec<f64> = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            if r == g && g == b {
                r as f64 / 255.0
            } else {
                ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).clamp(0.0, 1.0)
            }
        })
        .collect();
    let full = ImageTensor::new(h, w, pixels)?;
    let side = h.min(w);
    let square = full.crop((h - side) / 2, (w - side) / 2, side, side)?;
    Ok(square.resize(CANONICAL_SIZE, CANONICAL_SIZE))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    preprocess(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}
