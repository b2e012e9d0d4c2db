//! Multi-view deficiency voting and the densification / pruning scores.

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::io::{Camera, ImageBuffer};
use crate::render::{rasterize, view_loss, RasterOptions};

use super::texture::error_mask;
use super::RankingConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewStats {
    pub camera_index: usize,
    pub loss: f64,
    /// Fraction of pixels flagged by the error mask.
    pub mask_density: f64,
}

/// Raw per-primitive sums over the selected views.
#[derive(Debug, Clone, PartialEq)]
pub struct Deficiency {
    /// `C_i`: masked pixels where the splat's contribution exceeds `ε_v`.
    pub counts: Vec<u64>,
    /// Σ_v loss_v · Σ_u M_u · ω_{i,u}; input to the pruning score.
    pub weighted_error: Vec<f64>,
    pub views: Vec<ViewStats>,
}

impl Deficiency {
    pub fn n_views(&self) -> usize {
        self.views.len()
    }
}

/// Indices of the cameras used for voting.
pub fn selected_views(n_cameras: usize, stride: usize) -> Vec<usize> {
    (0..n_cameras).step_by(stride.max(1)).collect()
}

/// Renders each selected view, builds its error mask and folds masked
/// contributions back onto the splats.
pub fn deficiency_scores(
    cloud: &GaussianCloud,
    cameras: &[Camera],
    gt_images: &[ImageBuffer],
    cfg: &RankingConfig,
) -> Result<Deficiency> {
    cfg.validate()?;
    if cameras.len() != gt_images.len() {
        return Err(Error::invalid(format!(
            "{} cameras but {} ground-truth images",
            cameras.len(),
            gt_images.len()
        )));
    }
    if cloud.is_empty() {
        return Err(Error::invalid("cannot rank an empty cloud"));
    }
    let mut counts = vec![0u64; cloud.len()];
    let mut weighted_error = vec![0.0; cloud.len()];
    let mut views = Vec::new();

    for v in selected_views(cameras.len(), cfg.view_stride) {
        let (cam, gt) = (&cameras[v], &gt_images[v]);
        if gt.width() != cam.width as usize || gt.height() != cam.height as usize || gt.channels() != 3 {
            return Err(Error::invalid(format!(
                "ground truth {v} is {}×{}×{}, camera is {}×{}",
                gt.width(),
                gt.height(),
                gt.channels(),
                cam.width,
                cam.height
            )));
        }
        let rendered = rasterize(cloud, cam, &RasterOptions::default())?.image;
        let loss = view_loss(&rendered, gt, cfg.lambda_ssim)?;
        let mask = error_mask(&rendered, gt, cfg)?;
        let density = mask.pixels().iter().filter(|m| **m > 0.5).count() as f64 / mask.pixel_count() as f64;

        let opts = RasterOptions {
            record_accumulators: true,
            error_mask: Some(&mask),
            view_loss: loss,
            eps_v: cfg.eps_v,
        };
        let acc = rasterize(cloud, cam, &opts)?
            .per_gaussian
            .expect("accumulators were requested");
        for (c, a) in counts.iter_mut().zip(&acc.deficiency_count) {
            *c += a;
        }
        for (w, a) in weighted_error.iter_mut().zip(&acc.weighted_error_sum) {
            *w += a;
        }
        log::debug!("view {v}: loss {loss:.5}, mask density {density:.4}");
        views.push(ViewStats {
            camera_index: v,
            loss,
            mask_density: density,
        });
    }
    Ok(Deficiency {
        counts,
        weighted_error,
        views,
    })
}

/// `S_d = ⌊C / |V|⌋`.
pub fn densification_score(counts: &[u64], n_views: usize) -> Result<Vec<u64>> {
    if n_views == 0 {
        return Err(Error::invalid("densification score needs at least one view"));
    }
    Ok(counts.iter().map(|c| c / n_views as u64).collect())
}

/// Min-max normalised loss-weighted contributions; constant input gives zeros.
pub fn pruning_score(weighted_error: &[f64]) -> Vec<f64> {
    super::texture::min_max_normalize(weighted_error)
}

/// Runs the full ranking and stores `C`, `S_d` and `S_p` on the cloud.
pub fn rank_cloud(
    cloud: &mut GaussianCloud,
    cameras: &[Camera],
    gt_images: &[ImageBuffer],
    cfg: &RankingConfig,
) -> Result<Deficiency> {
    let d = deficiency_scores(cloud, cameras, gt_images, cfg)?;
    cloud.scores.densify = Some(densification_score(&d.counts, d.n_views())?);
    cloud.scores.prune = Some(pruning_score(&d.weighted_error));
    cloud.scores.deficiency = Some(d.counts.clone());
    Ok(d)
}
