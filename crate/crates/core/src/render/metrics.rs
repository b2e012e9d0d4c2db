//! Image quality metrics and the per-view training loss.

use crate::error::Result;
use crate::io::ImageBuffer;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Default SSIM weight in the view loss.
pub const DEFAULT_LAMBDA_SSIM: f64 = 0.2;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.pixels().len() as f64)
}

pub fn mean_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.pixels().len() as f64)
}

/// `10·log10(1/MSE)` in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(-10.0 * m.log10())
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// Separable Gaussian blur with zero padding, same-size output.
fn blur(src: &[f64], width: usize, height: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = SSIM_WINDOW as isize / 2;
    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - half;
                if sx >= 0 && (sx as usize) < width {
                    acc += w * src[y * width + sx as usize];
                }
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sy = y as isize + k as isize - half;
                if sy >= 0 && (sy as usize) < height {
                    acc += w * tmp[sy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Mean SSIM over pixels and channels (11×11 Gaussian window, σ = 1.5).
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let kernel = gaussian_window();
    let mut total = 0.0;
    for c in 0..ch {
        let x: Vec<f64> = a.pixels().iter().skip(c).step_by(ch).copied().collect();
        let y: Vec<f64> = b.pixels().iter().skip(c).step_by(ch).copied().collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

        let mu_x = blur(&x, w, h, &kernel);
        let mu_y = blur(&y, w, h, &kernel);
        let e_xx = blur(&xx, w, h, &kernel);
        let e_yy = blur(&yy, w, h, &kernel);
        let e_xy = blur(&xy, w, h, &kernel);

        let mut sum = 0.0;
        for i in 0..w * h {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2));
        }
        total += sum / (w * h) as f64;
    }
    Ok(total / ch as f64)
}

/// `(1 − λ)·L1 + λ·(1 − SSIM)`.
pub fn view_loss(a: &ImageBuffer, b: &ImageBuffer, lambda_ssim: f64) -> Result<f64> {
    let l1 = mean_abs_diff(a, b)?;
    if lambda_ssim == 0.0 {
        return Ok(l1);
    }
    Ok((1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - ssim(a, b)?))
}
