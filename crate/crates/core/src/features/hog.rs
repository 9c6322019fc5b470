//! Histogram of oriented gradients with unsigned orientations.

use std::f64::consts::PI;

use super::{l2_clip_normalize, vote_orientation, Gradients, HogConfig};
use crate::error::{Error, Result};
use crate::raster::ImageTensor;

/// Dense HOG descriptor: cell histograms grouped into overlapping blocks,
/// each block L2-normalized, clipped and renormalized. Blocks are emitted in
/// row-major order; within a block, cells are row-major and each contributes
/// `bins` values. Bin `b` is centered at `b · 180° / bins`.
pub fn extract_hog(img: &ImageTensor, cfg: &HogConfig) -> Result<Vec<f64>> {
    if cfg.cell_size == 0 || cfg.block == 0 || cfg.block_stride == 0 || cfg.bins == 0 {
        return Err(Error::argument("HOG parameters must be positive"));
    }
    let cells_y = img.height() / cfg.cell_size;
    let cells_x = img.width() / cfg.cell_size;
    if cells_y < cfg.block || cells_x < cfg.block {
        return Err(Error::argument(format!(
            "image {}x{} is smaller than one HOG block ({} px)",
            img.height(),
            img.width(),
            cfg.block * cfg.cell_size
        )));
    }

    let grad = Gradients::compute(img);
    let mut cells = vec![0.0; cells_y * cells_x * cfg.bins];
    for cy in 0..cells_y {
        for cx in 0..cells_x {
            let hist = &mut cells[(cy * cells_x + cx) * cfg.bins..][..cfg.bins];
            for r in cy * cfg.cell_size..(cy + 1) * cfg.cell_size {
                for c in cx * cfg.cell_size..(cx + 1) * cfg.cell_size {
                    let (mag, angle) = grad.at(r, c);
                    if mag > 0.0 {
                        vote_orientation(hist, angle, PI, mag);
                    }
                }
            }
        }
    }

    let blocks_y = (cells_y - cfg.block) / cfg.block_stride + 1;
    let blocks_x = (cells_x - cfg.block) / cfg.block_stride + 1;
    let block_len = cfg.block * cfg.block * cfg.bins;
    let mut out = Vec::with_capacity(blocks_y * blocks_x * block_len);
    let mut block = Vec::with_capacity(block_len);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            block.clear();
            for dy in 0..cfg.block {
                for dx in 0..cfg.block {
                    let cy = by * cfg.block_stride + dy;
                    let cx = bx * cfg.block_stride + dx;
                    block.extend_from_slice(&cells[(cy * cells_x + cx) * cfg.bins..][..cfg.bins]);
                }
            }
            l2_clip_normalize(&mut block, cfg.l2_clip);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}
