//! Descriptor front-ends producing [`FeatureMatrix`] inputs for the matchers.

mod dsift;
mod hog;
mod lbp;

pub use dsift::extract_dsift;
pub use hog::extract_hog;
pub use lbp::extract_lbp;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageTensor;
use crate::tlcore::FeatureMatrix;

/// Guard added to norms before dividing.
pub(crate) const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Pixels,
    Hog,
    Lbp,
    Dsift,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixels" => Ok(FeatureKind::Pixels),
            "hog" => Ok(FeatureKind::Hog),
            "lbp" => Ok(FeatureKind::Lbp),
            "dsift" => Ok(FeatureKind::Dsift),
            other => Err(Error::argument(format!("unknown feature kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    pub cell_size: usize,
    /// Block side length in cells.
    pub block: usize,
    /// Block stride in cells.
    pub block_stride: usize,
    pub bins: usize,
    pub l2_clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cell_size: 8,
            block: 2,
            block_stride: 1,
            bins: 9,
            l2_clip: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbpConfig {
    pub radius: f64,
    pub neighbors: usize,
    /// Cells per side of the histogram grid.
    pub grid: usize,
}

impl Default for LbpConfig {
    fn default() -> Self {
        LbpConfig {
            radius: 1.0,
            neighbors: 8,
            grid: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsiftConfig {
    pub step: usize,
    pub patch: usize,
    /// Spatial bins per side.
    pub spatial_bins: usize,
    pub orient_bins: usize,
    pub l2_clip: f64,
}

impl Default for DsiftConfig {
    fn default() -> Self {
        DsiftConfig {
            step: 8,
            patch: 16,
            spatial_bins: 4,
            orient_bins: 8,
            l2_clip: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    #[serde(default)]
    pub hog: HogConfig,
    #[serde(default)]
    pub lbp: LbpConfig,
    #[serde(default)]
    pub dsift: DsiftConfig,
    /// Per-feature standardization (fit on the training split).
    #[serde(default)]
    pub standardize: bool,
}

impl FeatureConfig {
    pub fn new(kind: FeatureKind) -> Self {
        FeatureConfig {
            kind,
            hog: HogConfig::default(),
            lbp: LbpConfig::default(),
            dsift: DsiftConfig::default(),
            standardize: false,
        }
    }
}

/// Row-major flattening of the raster.
pub fn extract_pixels(img: &ImageTensor) -> Vec<f64> {
    img.pixels().to_vec()
}

pub fn extract(img: &ImageTensor, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    match cfg.kind {
        FeatureKind::Pixels => Ok(extract_pixels(img)),
        FeatureKind::Hog => extract_hog(img, &cfg.hog),
        FeatureKind::Lbp => extract_lbp(img, &cfg.lbp),
        FeatureKind::Dsift => extract_dsift(img, &cfg.dsift),
    }
}

/// Extracts one column per image, preserving order.
///
/// When `cfg.standardize` is set, the batch is treated as the training split:
/// standardization statistics are fit on it and applied to it. Use
/// [`Standardizer`] directly to carry those statistics to other splits.
pub fn batch_extract(images: &[ImageTensor], cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let Some(first) = images.first() else {
        return Err(Error::argument("batch_extract: no images"));
    };
    let size = (first.height(), first.width());
    if let Some(i) = images.iter().position(|im| (im.height(), im.width()) != size) {
        return Err(Error::argument(format!(
            "batch_extract: image {i} is {}x{}, expected {}x{}",
            images[i].height(),
            images[i].width(),
            size.0,
            size.1
        )));
    }
    let columns = images
        .par_iter()
        .map(|im| extract(im, cfg))
        .collect::<Result<Vec<_>>>()?;
    let raw = FeatureMatrix::from_columns(&columns)?;
    if cfg.standardize {
        Standardizer::fit(&raw).apply(&raw)
    } else {
        Ok(raw)
    }
}

/// Per-feature affine standardization to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &FeatureMatrix) -> Self {
        let m = train.as_matrix();
        let n = m.ncols() as f64;
        let mut mean = Vec::with_capacity(m.nrows());
        let mut scale = Vec::with_capacity(m.nrows());
        for row in m.row_iter() {
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean.push(mu);
            // constant features are centered but left unscaled
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.dim() != self.mean.len() {
            return Err(Error::argument("standardizer dimension mismatch"));
        }
        let m = x.as_matrix();
        FeatureMatrix::new(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            (m[(i, j)] - self.mean[i]) / self.scale[i]
        }))
    }
}

/// Central-difference gradients with replicated borders.
pub(crate) struct Gradients {
    pub width: usize,
    pub magnitude: Vec<f64>,
    /// Angle of the gradient in radians, `atan2(gy, gx)` with `y` pointing down.
    pub angle: Vec<f64>,
}

impl Gradients {
    pub fn compute(img: &ImageTensor) -> Self {
        let (h, w) = (img.height(), img.width());
        let mut magnitude = Vec::with_capacity(h * w);
        let mut angle = Vec::with_capacity(h * w);
        for r in 0..h as isize {
            for c in 0..w as isize {
                let gx = img.get_clamped(r, c + 1) - img.get_clamped(r, c - 1);
                let gy = img.get_clamped(r + 1, c) - img.get_clamped(r - 1, c);
                magnitude.push(gx.hypot(gy));
                angle.push(gy.atan2(gx));
            }
        }
        Gradients {
            width: w,
            magnitude,
            angle,
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> (f64, f64) {
        let i = r * self.width + c;
        (self.magnitude[i], self.angle[i])
    }
}

/// Adds `weight` to a circular orientation histogram whose bin `b` is
/// centered at `b · period / bins`, splitting linearly between neighbors.
#[inline]
pub(crate) fn vote_orientation(hist: &mut [f64], angle: f64, period: f64, weight: f64) {
    let bins = hist.len();
    let pos = angle.rem_euclid(period) / period * bins as f64;
    let lower = pos.floor();
    let frac = pos - lower;
    let b0 = (lower as usize) % bins;
    let b1 = (b0 + 1) % bins;
    hist[b0] += weight * (1.0 - frac);
    hist[b1] += weight * frac;
}

/// L2 normalization, clipping at `clip`, renormalization.
pub(crate) fn l2_clip_normalize(v: &mut [f64], clip: f64) {
    let normalize = |v: &mut [f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm + NORM_GUARD;
        }
    };
    normalize(v);
    for x in v.iter_mut() {
        *x = x.min(clip);
    }
    normalize(v);
}
