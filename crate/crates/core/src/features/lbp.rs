//! Local binary patterns with circular neighborhoods.

use std::f64::consts::PI;

use super::LbpConfig;
use crate::error::{Error, Result};
use crate::raster::ImageTensor;

/// Neighbor offsets `(dy, dx)`; neighbor `k` sits at angle `2πk/P`
/// counter-clockwise from the positive x axis (so `k = 0` is to the right and
/// `k = 2` is above, with image rows increasing downward).
pub fn neighbor_offsets(cfg: &LbpConfig) -> Vec<(f64, f64)> {
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() < 1e-12 {
            r
        } else {
            v
        }
    };
    (0..cfg.neighbors)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / cfg.neighbors as f64;
            (snap(-cfg.radius * theta.sin()), snap(cfg.radius * theta.cos()))
        })
        .collect()
}

/// Binary pattern code of one pixel: bit `k` is set when neighbor `k`
/// (bilinearly sampled) is at least the center value.
pub fn lbp_code(img: &ImageTensor, offsets: &[(f64, f64)], row: usize, col: usize) -> usize {
    let center = img.get(row, col);
    offsets
        .iter()
        .enumerate()
        .fold(0usize, |code, (k, &(dy, dx))| {
            let v = img.sample(row as f64 + dy, col as f64 + dx);
            if v >= center {
                code | (1 << k)
            } else {
                code
            }
        })
}

/// Concatenated per-cell code histograms (L1-normalized), cells in row-major
/// order over a `grid × grid` partition of the image.
pub fn extract_lbp(img: &ImageTensor, cfg: &LbpConfig) -> Result<Vec<f64>> {
    if cfg.grid == 0 || cfg.neighbors == 0 || cfg.neighbors > 16 || !(cfg.radius > 0.0) {
        return Err(Error::argument(format!(
            "degenerate LBP configuration: grid {}, neighbors {}, radius {}",
            cfg.grid, cfg.neighbors, cfg.radius
        )));
    }
    if img.height() < cfg.grid || img.width() < cfg.grid {
        return Err(Error::argument(format!(
            "image {}x{} cannot be split into a {}x{} LBP grid",
            img.height(),
            img.width(),
            cfg.grid,
            cfg.grid
        )));
    }
    let offsets = neighbor_offsets(cfg);
    let n_codes = 1usize << cfg.neighbors;
    let cell_h = img.height() / cfg.grid;
    let cell_w = img.width() / cfg.grid;
    let mut out = vec![0.0; cfg.grid * cfg.grid * n_codes];
    for gy in 0..cfg.grid {
        for gx in 0..cfg.grid {
            let hist = &mut out[(gy * cfg.grid + gx) * n_codes..][..n_codes];
            for r in gy * cell_h..(gy + 1) * cell_h {
                for c in gx * cell_w..(gx + 1) * cell_w {
                    hist[lbp_code(img, &offsets, r, c)] += 1.0;
                }
            }
            let count = (cell_h * cell_w) as f64;
            for h in hist.iter_mut() {
                *h /= count;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_codes_are_all_ones() {
        let img = ImageTensor::constant(64, 64, 0.4).unwrap();
        let cfg = LbpConfig::default();
        let v = extract_lbp(&img, &cfg).unwrap();
        assert_eq!(v.len(), 16384);
        for cell in v.chunks(256) {
            assert_eq!(cell[255], 1.0);
            assert!(cell[..255].iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn axis_neighbors_are_exact_pixels() {
        let offs = neighbor_offsets(&LbpConfig::default());
        assert_eq!(offs[0], (0.0, 1.0));
        assert_eq!(offs[2], (-1.0, 0.0));
        assert_eq!(offs[4], (0.0, -1.0));
        assert_eq!(offs[6], (1.0, 0.0));
    }

    #[test]
    fn hand_enumerated_neighborhood() {
        // 3x3 patch, center 0.5:
        //   0.9 0.2 0.6
        //   0.4 0.5 0.7
        //   0.1 0.8 0.3
        let img = ImageTensor::new(3, 3, vec![0.9, 0.2, 0.6, 0.4, 0.5, 0.7, 0.1, 0.8, 0.3])
            .unwrap();
        let offs = neighbor_offsets(&LbpConfig::default());
        let code = lbp_code(&img, &offs, 1, 1);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let lerp = |p: f64, q: f64, t: f64| p + (q - p) * t;
        // diagonals sample the 2x2 cell between the center and the corner
        let up_right = lerp(lerp(0.2, 0.6, a), lerp(0.5, 0.7, a), 1.0 - a); // k=1
        let up_left = lerp(lerp(0.9, 0.2, 1.0 - a), lerp(0.4, 0.5, 1.0 - a), 1.0 - a); // k=3
        let down_left = lerp(lerp(0.4, 0.5, 1.0 - a), lerp(0.1, 0.8, 1.0 - a), a); // k=5
        let down_right = lerp(lerp(0.5, 0.7, a), lerp(0.8, 0.3, a), a); // k=7
        let neighbors = [0.7, up_right, 0.2, up_left, 0.4, down_left, 0.8, down_right];
        let expected = neighbors
            .iter()
            .enumerate()
            .filter(|(_, v)| **v >= 0.5)
            .fold(0, |acc, (k, _)| acc | (1 << k));
        assert_eq!(code, expected);
        // right (0.7) and below (0.8) are brighter; above (0.2), left (0.4) are not
        assert_eq!(code & 0b0101_0101, 0b0100_0001);
    }

    #[test]
    fn single_white_pixel() {
        let mut px = vec![0.0; 25];
        px[12] = 1.0;
        let img = ImageTensor::new(5, 5, px).unwrap();
        let offs = neighbor_offsets(&LbpConfig::default());
        // the bright pixel exceeds all its neighbors
        assert_eq!(lbp_code(&img, &offs, 2, 2), 0);
        // its right neighbor (center 0) sees the bright pixel to its left and
        // ties (0 ≥ 0) everywhere else
        assert_eq!(lbp_code(&img, &offs, 2, 3), 255);
    }

    #[test]
    fn cell_histograms_sum_to_one() {
        let img = ImageTensor::from_fn_clamped(64, 64, |r, c| ((r * 13 + c * 7) % 17) as f64 / 16.0);
        let v = extract_lbp(&img, &LbpConfig::default()).unwrap();
        for cell in v.chunks(256) {
            assert!((cell.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let img = ImageTensor::constant(64, 64, 0.4).unwrap();
        let cfg = LbpConfig { grid: 0, ..Default::default() };
        assert!(extract_lbp(&img, &cfg).is_err());
        let small = ImageTensor::constant(4, 4, 0.4).unwrap();
        assert!(extract_lbp(&small, &LbpConfig::default()).is_err());
    }
}
