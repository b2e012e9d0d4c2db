//! Texture-aware structural map and the dual-criterion error mask.

use crate::error::{Error, Result};
use crate::io::ImageBuffer;

use super::RankingConfig;

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn luminance(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "luminance needs an RGB image, got {} channel(s)",
            img.channels()
        )));
    }
    let px = img
        .pixels()
        .chunks_exact(3)
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect();
    ImageBuffer::from_vec(img.width(), img.height(), 1, px)
}

/// 3×3 correlation with edge replication on a single-channel plane.
fn filter3(src: &ImageBuffer, kernel: &[[f64; 3]; 3]) -> Vec<f64> {
    let (w, h) = (src.width() as isize, src.height() as isize);
    let at = |x: isize, y: isize| src.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize, 0);
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ky, row) in kernel.iter().enumerate() {
                for (kx, k) in row.iter().enumerate() {
                    if *k != 0.0 {
                        acc += k * at(x + kx as isize - 1, y + ky as isize - 1);
                    }
                }
            }
            out.push(acc);
        }
    }
    out
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
const LAPLACE_4: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];

/// `√((Kx∗ℓ)² + (Ky∗ℓ)² + ε)` over a luminance plane.
pub fn gradient_magnitude(lum: &ImageBuffer, eps: f64) -> Vec<f64> {
    let gx = filter3(lum, &SOBEL_X);
    let gy = filter3(lum, &SOBEL_Y);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b + eps).sqrt()).collect()
}

/// `|K_lap ∗ ℓ|` with the 4-neighbour Laplacian.
pub fn laplacian_magnitude(lum: &ImageBuffer) -> Vec<f64> {
    filter3(lum, &LAPLACE_4).into_iter().map(f64::abs).collect()
}

/// Min-max normalisation to `[0, 1]`; a constant input maps to zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / range).collect()
}

/// Normalised `G + λ·H` of the luminance of an RGB image.
pub fn texture_map(img: &ImageBuffer, lambda: f64, eps: f64) -> Result<ImageBuffer> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::invalid(format!(
            "texture map needs at least 3×3 pixels, got {}×{}",
            img.width(),
            img.height()
        )));
    }
    let lum = luminance(img)?;
    let g = gradient_magnitude(&lum, eps);
    let h = laplacian_magnitude(&lum);
    let combined: Vec<f64> = g.iter().zip(&h).map(|(g, h)| g + lambda * h).collect();
    ImageBuffer::from_vec(img.width(), img.height(), 1, min_max_normalize(&combined))
}

fn mask_from(width: usize, height: usize, flags: impl Iterator<Item = bool>) -> Result<ImageBuffer> {
    ImageBuffer::from_vec(width, height, 1, flags.map(|f| if f { 1.0 } else { 0.0 }).collect())
}

/// Pixels whose texture maps differ by more than `τ1`.
pub fn structural_mask(rendered: &ImageBuffer, gt: &ImageBuffer, cfg: &RankingConfig) -> Result<ImageBuffer> {
    rendered.ensure_same_shape(gt)?;
    let a = texture_map(rendered, cfg.lambda, cfg.eps)?;
    let b = texture_map(gt, cfg.lambda, cfg.eps)?;
    mask_from(
        rendered.width(),
        rendered.height(),
        a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs() > cfg.tau1),
    )
}

/// Pixels whose largest per-channel absolute difference exceeds `τ2`.
pub fn photometric_mask(rendered: &ImageBuffer, gt: &ImageBuffer, cfg: &RankingConfig) -> Result<ImageBuffer> {
    rendered.ensure_same_shape(gt)?;
    let ch = rendered.channels();
    mask_from(
        rendered.width(),
        rendered.height(),
        rendered.pixels().chunks_exact(ch).zip(gt.pixels().chunks_exact(ch)).map(|(a, b)| {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) > cfg.tau2
        }),
    )
}

/// Conjunction of the structural and photometric criteria.
pub fn error_mask(rendered: &ImageBuffer, gt: &ImageBuffer, cfg: &RankingConfig) -> Result<ImageBuffer> {
    let s = structural_mask(rendered, gt, cfg)?;
    let p = photometric_mask(rendered, gt, cfg)?;
    mask_from(
        rendered.width(),
        rendered.height(),
        s.pixels().iter().zip(p.pixels()).map(|(a, b)| *a > 0.5 && *b > 0.5),
    )
}
