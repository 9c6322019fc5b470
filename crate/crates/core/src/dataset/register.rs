use crate::error::{Error, Result};
use crate::raster::ImageTensor;

/// Outcome of aligning an image to a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub image: ImageTensor,
    /// Translation `(rows, cols)` applied to the image content.
    pub shift: (i32, i32),
    pub scale: f64,
    /// Correlation with the reference after warping; `None` when undefined.
    pub ncc: Option<f64>,
}

/// Zero-mean normalized cross-correlation; `None` when either image has
/// (numerically) zero variance.
pub fn ncc(a: &ImageTensor, b: &ImageTensor) -> Option<f64> {
    let (pa, pb) = (a.pixels(), b.pixels());
    debug_assert_eq!(pa.len(), pb.len());
    let n = pa.len() as f64;
    let (ma, mb) = (a.mean(), b.mean());
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pa.iter().zip(pb) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa / n < 1e-12 || sbb / n < 1e-12 {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Per-axis bilinear lookup: lower index, upper index, weight of the upper.
fn axis_taps(len: usize, scale: f64, shift: i32) -> Vec<(usize, usize, f64)> {
    let center = (len as f64 - 1.0) / 2.0;
    let last = len as isize - 1;
    (0..len)
        .map(|i| {
            let p = center + scale * (i as f64 - center) - shift as f64;
            let p0 = p.floor();
            let lo = (p0 as isize).clamp(0, last) as usize;
            let hi = (p0 as isize + 1).clamp(0, last) as usize;
            (lo, hi, p - p0)
        })
        .collect()
}

fn warp_into(img: &ImageTensor, shift: (i32, i32), scale: f64, out: &mut Vec<f64>) {
    let rows = axis_taps(img.height(), scale, shift.0);
    let cols = axis_taps(img.width(), scale, shift.1);
    out.clear();
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            let p00 = img.get(r0, c0);
            let p01 = img.get(r0, c1);
            let p10 = img.get(r1, c0);
            let p11 = img.get(r1, c1);
            let top = p00 + (p01 - p00) * fx;
            let bottom = p10 + (p11 - p10) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
}

/// Scales the image about its centre by `scale` and moves its content by
/// `shift`, sampling bilinearly with replicated borders.
pub fn warp(img: &ImageTensor, shift: (i32, i32), scale: f64) -> ImageTensor {
    if shift == (0, 0) && scale == 1.0 {
        return img.clone();
    }
    let mut buf = Vec::with_capacity(img.pixels().len());
    warp_into(img, shift, scale, &mut buf);
    let mut out = ImageTensor::from_fn_clamped(img.height(), img.width(), |r, c| buf[r * img.width() + c]);
    out.source_path = img.source_path.clone();
    out
}

/// Correlation of `values` with a reference given as its centered pixels and
/// their norm.
fn ncc_centered(values: &[f64], centered_ref: &[f64], ref_norm: f64) -> Option<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut dot, mut ss) = (0.0, 0.0);
    for (v, r) in values.iter().zip(centered_ref) {
        let d = v - mean;
        dot += d * r;
        ss += d * d;
    }
    if ss / n < 1e-12 {
        return None;
    }
    Some(dot / (ss.sqrt() * ref_norm))
}

/// Exhaustive search over integer shifts in `[-max_shift, max_shift]²` and
/// the listed scales for the warp that maximizes correlation with
/// `reference`. The identity is evaluated first and only replaced by a
/// strictly better candidate.
pub fn register_detailed(
    img: &ImageTensor,
    reference: &ImageTensor,
    max_shift: u32,
    scales: &[f64],
) -> Result<Registration> {
    if (img.height(), img.width()) != (reference.height(), reference.width()) {
        return Err(Error::argument("registration needs images of equal size"));
    }
    if max_shift > 8 {
        return Err(Error::argument(format!("max_shift {max_shift} exceeds 8")));
    }
    if let Some(s) = scales.iter().find(|s| !(0.9..=1.1).contains(*s)) {
        return Err(Error::argument(format!("scale {s} outside [0.9, 1.1]")));
    }
    let identity = ncc(img, reference);
    let Some(mut best_score) = identity else {
        return Ok(Registration {
            image: img.clone(),
            shift: (0, 0),
            scale: 1.0,
            ncc: None,
        });
    };
    let ref_mean = reference.mean();
    let centered: Vec<f64> = reference.pixels().iter().map(|v| v - ref_mean).collect();
    let ref_norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = ((0, 0), 1.0);
    let mut buf = Vec::with_capacity(img.pixels().len());
    let m = max_shift as i32;
    for &scale in scales {
        for dy in -m..=m {
            for dx in -m..=m {
                if (dy, dx) == (0, 0) && scale == 1.0 {
                    continue;
                }
                warp_into(img, (dy, dx), scale, &mut buf);
                if let Some(score) = ncc_centered(&buf, &centered, ref_norm) {
                    if score > best_score {
                        best_score = score;
                        best = ((dy, dx), scale);
                    }
                }
            }
        }
    }
    Ok(Registration {
        image: warp(img, best.0, best.1),
        shift: best.0,
        scale: best.1,
        ncc: Some(best_score),
    })
}

pub fn register(
    img: &ImageTensor,
    reference: &ImageTensor,
    max_shift: u32,
    scales: &[f64],
) -> Result<ImageTensor> {
    register_detailed(img, reference, max_shift, scales).map(|r| r.image)
}
