use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    /// Add mirror images across the vertical axis.
    pub flip_y: bool,
    pub brightness_factors: Vec<f64>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            flip_y: true,
            brightness_factors: vec![0.8, 1.2],
        }
    }
}

impl AugmentationSpec {
    pub fn none() -> Self {
        AugmentationSpec {
            flip_y: false,
            brightness_factors: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.brightness_factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            Some(f) => Err(Error::argument(format!("brightness factor {f} must be positive"))),
            None => Ok(()),
        }
    }

    /// Number of images produced per input.
    pub fn copies(&self) -> usize {
        let per_orientation = 1 + self.brightness_factors.len();
        if self.flip_y {
            2 * per_orientation
        } else {
            per_orientation
        }
    }
}

/// Expands every image into its augmented copies. Copies of one input are
/// contiguous, ordered: original, flip, brightness factors in listed order,
/// then the flipped image at each factor.
pub fn augment(images: &[ImageTensor], spec: &AugmentationSpec) -> Result<Vec<ImageTensor>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(images.len() * spec.copies());
    for img in images {
        out.push(img.clone());
        let flipped = spec.flip_y.then(|| img.flip_horizontal());
        if let Some(f) = &flipped {
            out.push(f.clone());
        }
        out.extend(spec.brightness_factors.iter().map(|&k| img.scale_brightness(k)));
        if let Some(f) = &flipped {
            out.extend(spec.brightness_factors.iter().map(|&k| f.scale_brightness(k)));
        }
    }
    Ok(out)
}
