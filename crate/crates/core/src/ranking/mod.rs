//! Multi-view contribution ranking.
//!
//! A rendered view is compared with its ground truth through a texture map
//! (Sobel gradient plus weighted Laplacian of luminance). Pixels that differ
//! both structurally and photometrically form an error mask; splats that
//! contribute noticeably to masked pixels collect deficiency votes across
//! views. From the votes come an integer densification score and a
//! normalised pruning score, the latter driving a budgeted random pruner.

pub mod prune;
pub mod scores;
pub mod texture;

use crate::error::{Error, Result};

pub use prune::{budgeted_prune, prune_weight, sample_without_replacement, PruneFilters, PruneOutcome};
pub use scores::{
    deficiency_scores, densification_score, pruning_score, rank_cloud, selected_views, Deficiency, ViewStats,
};
pub use texture::{error_mask, luminance, photometric_mask, structural_mask, texture_map};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingConfig {
    /// Structural threshold on the texture-map difference.
    pub tau1: f64,
    /// Photometric threshold on the per-channel difference.
    pub tau2: f64,
    /// Laplacian weight in the texture map.
    pub lambda: f64,
    /// Stabiliser inside the gradient magnitude.
    pub eps: f64,
    /// Minimum contribution `ω` for a vote.
    pub eps_v: f64,
    pub lambda_ssim: f64,
    /// Stabiliser in the prune sampling weight.
    pub eps_prune: f64,
    /// Use every `view_stride`-th camera.
    pub view_stride: usize,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            tau1: 0.1,
            tau2: 0.05,
            lambda: 0.5,
            eps: 1e-6,
            eps_v: 0.01,
            lambda_ssim: crate::render::metrics::DEFAULT_LAMBDA_SSIM,
            eps_prune: 1e-3,
            view_stride: 1,
        }
    }
}

impl RankingConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.tau1) || !open_unit(self.tau2) {
            return Err(Error::invalid(format!(
                "thresholds must lie in (0,1): tau1={}, tau2={}",
                self.tau1, self.tau2
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("texture lambda must be non-negative"));
        }
        if !(self.eps > 0.0 && self.eps_v > 0.0 && self.eps_prune > 0.0) {
            return Err(Error::invalid("epsilons must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::invalid("lambda_ssim must lie in [0,1]"));
        }
        if self.view_stride == 0 {
            return Err(Error::invalid("view stride must be positive"));
        }
        Ok(())
    }
}
