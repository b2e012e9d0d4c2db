//! CPU splat renderer.
//!
//! Splats are projected to screen-space ellipses, sorted globally by depth
//! (ties by source index) and blended front to back per pixel. While
//! blending, the renderer can fold each splat's per-pixel contribution
//! `ω = α'·T` into per-splat accumulators restricted to an error mask; this
//! is how 2D error maps become 3D scores without storing per-pixel weights.
//!
//! Work is split into square tiles. Tiles run in parallel and accumulator
//! partial sums are merged in tile order, so results do not depend on the
//! thread schedule.

pub mod metrics;

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{eval_sh, GaussianCloud, GaussianPrimitive};
use crate::io::{Camera, ImageBuffer};

pub use metrics::{psnr, ssim, view_loss};

/// Isotropic screen-space variance added to every projected splat, px².
pub const LOW_PASS: f64 = 0.3;

/// Screen-space splat.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub source_index: usize,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Pixel radius beyond which `α'` drops under the skip threshold.
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub near: f64,
    /// Upper clamp on per-pixel `α'`.
    pub alpha_clamp: f64,
    /// Blending stops once transmittance falls below this.
    pub min_transmittance: f64,
    /// Contributions with `α'` below this are skipped.
    pub min_alpha: f64,
    pub tile_size: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            near: 0.01,
            alpha_clamp: 0.99,
            min_transmittance: 1e-4,
            min_alpha: 1.0 / 255.0,
            tile_size: 16,
        }
    }
}

/// Accumulator recording options for [`rasterize`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RasterOptions<'a> {
    pub record_accumulators: bool,
    /// Pixels with a value above 0.5 count as erroneous. `None` means every pixel.
    pub error_mask: Option<&'a ImageBuffer>,
    /// Loss of this view, folded into `weighted_error_sum`.
    pub view_loss: f64,
    /// Contribution threshold `ε_v`.
    pub eps_v: f64,
}

/// Per-splat sums gathered over masked pixels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Accumulators {
    /// Number of masked pixels where the splat's `ω` exceeds `ε_v`.
    pub deficiency_count: Vec<u64>,
    /// Σ over the same pixels of `view_loss · ω`.
    pub weighted_error_sum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: ImageBuffer,
    /// Accumulated opacity `1 − T`.
    pub alpha: ImageBuffer,
    pub per_gaussian: Option<Accumulators>,
}

/// Projects one splat; `None` when it is behind the near plane, too faint or
/// entirely off screen.
pub fn project_gaussian(
    g: &GaussianPrimitive,
    source_index: usize,
    cam: &Camera,
    settings: &RenderSettings,
) -> Result<Option<ProjectedGaussian>> {
    let cov = g.covariance()?;
    let color = {
        let dir = (g.mean - cam.center()).normalize();
        eval_sh(g.sh_degree()?, &g.sh_coeffs, &dir)
    };
    Ok(project_parts(
        &g.mean,
        cov.matrix(),
        g.opacity(),
        color,
        source_index,
        cam,
        settings,
    ))
}

fn project_parts(
    mean: &Vector3<f64>,
    cov3: &nalgebra::Matrix3<f64>,
    opacity: f64,
    color: [f64; 3],
    source_index: usize,
    cam: &Camera,
    settings: &RenderSettings,
) -> Option<ProjectedGaussian> {
    let t = cam.to_camera_space(mean);
    if t.z <= settings.near || opacity < settings.min_alpha {
        return None;
    }
    let inv_z = 1.0 / t.z;
    let mean2d = Vector2::new(cam.fx * t.x * inv_z + cam.cx, cam.fy * t.y * inv_z + cam.cy);
    let j = Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * t.x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * t.y * inv_z * inv_z,
    );
    let jw = j * cam.rotation;
    let mut cov2d = jw * cov3 * jw.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += LOW_PASS;
    cov2d[(1, 1)] += LOW_PASS;

    let det = cov2d.determinant();
    if !(det > 0.0) {
        return None;
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;

    let half_trace = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = half_trace + (half_trace * half_trace - det).max(0.0).sqrt();
    // Unclamped opacity: α' = min(α·e^q, clamp) stays above the threshold for as long as α·e^q does.
    let reach = (2.0 * (opacity / settings.min_alpha).ln()).max(0.0).sqrt();
    let radius = lambda_max.sqrt() * reach;

    let (w, h) = (cam.width as f64, cam.height as f64);
    if mean2d.x + radius < 0.0 || mean2d.x - radius > w || mean2d.y + radius < 0.0 || mean2d.y - radius > h {
        return None;
    }
    Some(ProjectedGaussian {
        mean2d,
        cov2d,
        depth: t.z,
        source_index,
        conic,
        opacity,
        color,
        radius,
    })
}

/// Projects the whole cloud and returns the visible splats sorted front to
/// back (depth, then source index).
pub fn project_cloud(cloud: &GaussianCloud, cam: &Camera, settings: &RenderSettings) -> Result<Vec<ProjectedGaussian>> {
    let center = cam.center();
    let degree = cloud.sh_degree();
    let projected: Vec<Option<ProjectedGaussian>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let cov = cloud.covariance(i)?;
            let mean = cloud.means[i];
            let dir = (mean - center).normalize();
            let color = eval_sh(degree, cloud.sh_of(i), &dir);
            Ok(project_parts(&mean, cov.matrix(), cloud.opacity(i), color, i, cam, settings))
        })
        .collect::<Result<_>>()?;
    let mut visible: Vec<ProjectedGaussian> = projected.into_iter().flatten().collect();
    visible.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.source_index.cmp(&b.source_index)));
    Ok(visible)
}

/// `α'` of a splat at pixel centre `p`, before thresholding.
#[inline]
pub fn splat_alpha(g: &ProjectedGaussian, p: &Vector2<f64>, alpha_clamp: f64) -> f64 {
    let d = p - g.mean2d;
    let power = -0.5 * (g.conic[(0, 0)] * d.x * d.x + 2.0 * g.conic[(0, 1)] * d.x * d.y + g.conic[(1, 1)] * d.y * d.y);
    (g.opacity * power.min(0.0).exp()).min(alpha_clamp)
}

struct TileOutput {
    color: Vec<[f64; 3]>,
    transmittance: Vec<f64>,
    /// Parallel to the tile's splat list.
    counts: Vec<u64>,
    sums: Vec<f64>,
}

/// Renders `cloud` from `cam` with default settings.
pub fn rasterize(cloud: &GaussianCloud, cam: &Camera, options: &RasterOptions) -> Result<RenderOutput> {
    rasterize_with(cloud, cam, options, &RenderSettings::default())
}

pub fn rasterize_with(
    cloud: &GaussianCloud,
    cam: &Camera,
    options: &RasterOptions,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    let (width, height) = (cam.width as usize, cam.height as usize);
    if let Some(mask) = options.error_mask {
        if mask.width() != width || mask.height() != height || mask.channels() != 1 {
            return Err(Error::invalid(format!(
                "error mask is {}×{}×{}, camera is {width}×{height}",
                mask.width(),
                mask.height(),
                mask.channels()
            )));
        }
    }
    let splats = project_cloud(cloud, cam, settings)?;

    let ts = settings.tile_size.max(1);
    let (tiles_x, tiles_y) = (width.div_ceil(ts), height.div_ceil(ts));
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (k, g) in splats.iter().enumerate() {
        let r = g.radius + 1.0;
        let x0 = ((g.mean2d.x - r).floor().max(0.0) as usize).min(width - 1) / ts;
        let x1 = ((g.mean2d.x + r).ceil().max(0.0) as usize).min(width - 1) / ts;
        let y0 = ((g.mean2d.y - r).floor().max(0.0) as usize).min(height - 1) / ts;
        let y1 = ((g.mean2d.y + r).ceil().max(0.0) as usize).min(height - 1) / ts;
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }

    let record = options.record_accumulators;
    let tiles: Vec<TileOutput> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let list = &bins[t];
            let xs = tx * ts..((tx + 1) * ts).min(width);
            let ys = ty * ts..((ty + 1) * ts).min(height);
            let npx = xs.len() * ys.len();
            let mut out = TileOutput {
                color: Vec::with_capacity(npx),
                transmittance: Vec::with_capacity(npx),
                counts: if record { vec![0; list.len()] } else { Vec::new() },
                sums: if record { vec![0.0; list.len()] } else { Vec::new() },
            };
            for y in ys.clone() {
                for x in xs.clone() {
                    let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let masked = record
                        && options.error_mask.is_none_or(|m| m.get(x, y, 0) > 0.5);
                    let mut rgb = [0.0; 3];
                    let mut trans = 1.0;
                    for (slot, &k) in list.iter().enumerate() {
                        let g = &splats[k as usize];
                        let a = splat_alpha(g, &p, settings.alpha_clamp);
                        if a < settings.min_alpha {
                            continue;
                        }
                        let w = a * trans;
                        for (acc, c) in rgb.iter_mut().zip(g.color) {
                            *acc += c * w;
                        }
                        if masked && w > options.eps_v {
                            out.counts[slot] += 1;
                            out.sums[slot] += options.view_loss * w;
                        }
                        trans *= 1.0 - a;
                        if trans < settings.min_transmittance {
                            break;
                        }
                    }
                    out.color.push(rgb);
                    out.transmittance.push(trans);
                }
            }
            out
        })
        .collect();

    let mut image = vec![0.0; width * height * 3];
    let mut alpha = vec![0.0; width * height];
    let mut acc = record.then(|| Accumulators {
        deficiency_count: vec![0; cloud.len()],
        weighted_error_sum: vec![0.0; cloud.len()],
    });
    for (t, tile) in tiles.iter().enumerate() {
        let (tx, ty) = (t % tiles_x, t / tiles_x);
        let xs = tx * ts..((tx + 1) * ts).min(width);
        let ys = ty * ts..((ty + 1) * ts).min(height);
        let mut i = 0;
        for y in ys {
            for x in xs.clone() {
                let px = y * width + x;
                image[px * 3..px * 3 + 3].copy_from_slice(&tile.color[i]);
                alpha[px] = 1.0 - tile.transmittance[i];
                i += 1;
            }
        }
        if let Some(acc) = acc.as_mut() {
            for (slot, &k) in bins[t].iter().enumerate() {
                let src = splats[k as usize].source_index;
                acc.deficiency_count[src] += tile.counts[slot];
                acc.weighted_error_sum[src] += tile.sums[slot];
            }
        }
    }
    for v in image.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(RenderOutput {
        image: ImageBuffer::from_vec(width, height, 3, image)?,
        alpha: ImageBuffer::from_vec(width, height, 1, alpha)?,
        per_gaussian: acc,
    })
}

/// Plain render without accumulators.
pub fn render(cloud: &GaussianCloud, cam: &Camera) -> Result<ImageBuffer> {
    Ok(rasterize(cloud, cam, &RasterOptions::default())?.image)
}
