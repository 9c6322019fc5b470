//! Single-channel floating-point images.

use crate::error::{Error, Result};

/// Grayscale raster with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    pub source_path: Option<String>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::argument("image must have positive size"));
        }
        if pixels.len() != height * width {
            return Err(Error::argument(format!(
                "pixel buffer has {} values, expected {height}x{width}",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::argument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(ImageTensor {
            height,
            width,
            pixels,
            source_path: None,
        })
    }

    /// Builds an image from arbitrary values, clamping into `[0, 1]`.
    pub fn from_fn_clamped(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                pixels.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        ImageTensor {
            height,
            width,
            pixels,
            source_path: None,
        }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        ImageTensor::new(height, width, vec![value; height * width])
    }

    pub fn with_source(mut self, path: impl Into<String>) -> Self {
        self.source_path = Some(path.into());
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Pixel lookup with replicated borders.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }

    /// Bilinear sample at fractional coordinates with replicated borders.
    ///
    /// Written as nested linear interpolations so that a constant
    /// neighborhood reproduces its value exactly.
    pub fn sample(&self, y: f64, x: f64) -> f64 {
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let (r, c) = (y0 as isize, x0 as isize);
        let p00 = self.get_clamped(r, c);
        let p01 = self.get_clamped(r, c + 1);
        let p10 = self.get_clamped(r + 1, c);
        let p11 = self.get_clamped(r + 1, c + 1);
        let top = p00 + (p01 - p00) * fx;
        let bottom = p10 + (p11 - p10) * fx;
        top + (bottom - top) * fy
    }

    /// Mirror across the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks(self.width) {
            pixels.extend(row.iter().rev());
        }
        ImageTensor {
            height: self.height,
            width: self.width,
            pixels,
            source_path: self.source_path.clone(),
        }
    }

    /// Multiplies intensities by `factor`, clamping to `[0, 1]`.
    pub fn scale_brightness(&self, factor: f64) -> Self {
        ImageTensor {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|v| (v * factor).clamp(0.0, 1.0)).collect(),
            source_path: self.source_path.clone(),
        }
    }

    /// Bilinear resize using pixel-center alignment; same-size resizing is
    /// the identity.
    pub fn resize(&self, height: usize, width: usize) -> Self {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut out = ImageTensor::from_fn_clamped(height, width, |r, c| {
            let y = (r as f64 + 0.5) * sy - 0.5;
            let x = (c as f64 + 0.5) * sx - 0.5;
            self.sample(y, x)
        });
        out.source_path = self.source_path.clone();
        out
    }

    /// Sub-image `[top, top+height) × [left, left+width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(Error::argument(format!(
                "crop {height}x{width} at ({top},{left}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            pixels.extend_from_slice(&self.pixels[start..start + width]);
        }
        Ok(ImageTensor {
            height,
            width,
            pixels,
            source_path: self.source_path.clone(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Quantizes to 8-bit grayscale (round to nearest).
    pub fn to_gray8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(ImageTensor::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(ImageTensor::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn flip_is_an_involution() {
        let img = ImageTensor::from_fn_clamped(3, 4, |r, c| (r * 4 + c) as f64 / 12.0);
        assert_eq!(img.flip_horizontal().get(0, 0), img.get(0, 3));
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn sampling_constant_image_is_exact() {
        let img = ImageTensor::constant(5, 5, 0.3).unwrap();
        for &(y, x) in &[(0.3, 0.7), (2.29, 3.71), (-1.0, 7.5)] {
            assert_eq!(img.sample(y, x), 0.3);
        }
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = ImageTensor::from_fn_clamped(8, 8, |r, c| ((r * 3 + c * 7) % 11) as f64 / 10.0);
        assert_eq!(img.resize(8, 8), img);
        let half = img.resize(4, 4);
        assert_eq!((half.height(), half.width()), (4, 4));
    }
}
