//! Dense SIFT: fixed-scale SIFT descriptors on a regular grid.

use std::f64::consts::PI;

use super::{l2_clip_normalize, vote_orientation, DsiftConfig, Gradients};
use crate::error::{Error, Result};
use crate::raster::ImageTensor;

/// Top-left corners of the sampling grid along one axis.
fn grid_positions(extent: usize, patch: usize, step: usize) -> Vec<usize> {
    (0..=extent - patch).step_by(step).collect()
}

/// Concatenated 128-d (with defaults) descriptors, patches in row-major grid
/// order. Within a descriptor, spatial bins are row-major and each holds
/// `orient_bins` signed-orientation values (bin `b` centered at `b · 360° / orient_bins`).
pub fn extract_dsift(img: &ImageTensor, cfg: &DsiftConfig) -> Result<Vec<f64>> {
    if cfg.step == 0 || cfg.patch == 0 || cfg.spatial_bins == 0 || cfg.orient_bins == 0 {
        return Err(Error::argument("dense SIFT parameters must be positive"));
    }
    if cfg.patch % cfg.spatial_bins != 0 {
        return Err(Error::argument(format!(
            "patch size {} is not divisible by {} spatial bins",
            cfg.patch, cfg.spatial_bins
        )));
    }
    if cfg.patch > img.height() || cfg.patch > img.width() {
        return Err(Error::argument(format!(
            "patch {} px is larger than the {}x{} image",
            cfg.patch,
            img.height(),
            img.width()
        )));
    }
    let grad = Gradients::compute(img);
    let ys = grid_positions(img.height(), cfg.patch, cfg.step);
    let xs = grid_positions(img.width(), cfg.patch, cfg.step);
    let bin_px = cfg.patch / cfg.spatial_bins;
    let desc_len = cfg.spatial_bins * cfg.spatial_bins * cfg.orient_bins;
    let sigma = cfg.patch as f64 / 2.0;
    let center = (cfg.patch as f64 - 1.0) / 2.0;

    // Gaussian window is shared by every patch
    let window: Vec<f64> = (0..cfg.patch * cfg.patch)
        .map(|i| {
            let dy = (i / cfg.patch) as f64 - center;
            let dx = (i % cfg.patch) as f64 - center;
            (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp()
        })
        .collect();

    let mut out = Vec::with_capacity(ys.len() * xs.len() * desc_len);
    let mut desc = vec![0.0; desc_len];
    for &y0 in &ys {
        for &x0 in &xs {
            desc.iter_mut().for_each(|v| *v = 0.0);
            for py in 0..cfg.patch {
                for px in 0..cfg.patch {
                    let (mag, angle) = grad.at(y0 + py, x0 + px);
                    if mag == 0.0 {
                        continue;
                    }
                    let cell = (py / bin_px) * cfg.spatial_bins + px / bin_px;
                    let hist = &mut desc[cell * cfg.orient_bins..][..cfg.orient_bins];
                    vote_orientation(hist, angle, 2.0 * PI, mag * window[py * cfg.patch + px]);
                }
            }
            l2_clip_normalize(&mut desc, cfg.l2_clip);
            out.extend_from_slice(&desc);
        }
    }
    Ok(out)
}
