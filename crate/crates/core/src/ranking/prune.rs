//! Budgeted stochastic pruning with inverse-importance weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneFilters {
    /// Primitives less opaque than this are not candidates.
    pub min_opacity: f64,
    /// Largest admitted world scale, as a fraction of the scene extent.
    pub max_world_scale: f64,
}

impl Default for PruneFilters {
    fn default() -> Self {
        PruneFilters {
            min_opacity: 0.005,
            max_world_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub cloud: GaussianCloud,
    /// Removed indices into the input cloud, ascending.
    pub removed: Vec<usize>,
    pub candidates: usize,
    pub requested: usize,
    /// The request exceeded the candidate count and was clamped.
    pub clamped: bool,
}

/// `1 / (ε + (1 − S_p))`.
pub fn prune_weight(s_p: f64, eps: f64) -> f64 {
    1.0 / (eps + (1.0 - s_p))
}

/// Weighted sampling without replacement by exponential keys: each item gets
/// `−ln(u)/w`, and the `k` smallest keys win (ties to the lower index).
pub fn sample_without_replacement(weights: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            // 1 − U(0,1) lies in (0, 1], so the log is finite.
            let u = 1.0 - rng.random::<f64>();
            (-u.ln() / w, i)
        })
        .collect();
    let k = k.min(keys.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keys.len() {
        keys.select_nth_unstable_by(k - 1, cmp);
        keys.truncate(k);
    }
    keys.sort_by(cmp);
    keys.into_iter().map(|(_, i)| i).collect()
}

/// Removes `budget` candidates drawn with probability proportional to their
/// inverse-importance weight. Non-candidates are always kept.
pub fn budgeted_prune(
    cloud: &GaussianCloud,
    s_p: &[f64],
    budget: usize,
    seed: u64,
    filters: &PruneFilters,
    eps_prune: f64,
) -> Result<PruneOutcome> {
    if s_p.len() != cloud.len() {
        return Err(Error::invalid(format!(
            "{} pruning scores for {} primitives",
            s_p.len(),
            cloud.len()
        )));
    }
    if !(eps_prune > 0.0) {
        return Err(Error::invalid("prune epsilon must be positive"));
    }
    let extent = cloud
        .bounds()
        .map(|(lo, hi)| (hi - lo).max())
        .filter(|e| *e > 0.0)
        .unwrap_or(1.0);
    let scale_limit = filters.max_world_scale * extent;

    let candidates: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.opacity(i) >= filters.min_opacity && cloud.scales(i).max() <= scale_limit)
        .collect();
    let clamped = budget > candidates.len();
    if clamped {
        log::warn!(
            "prune budget {budget} exceeds {} candidates; clamping",
            candidates.len()
        );
    }
    let weights: Vec<f64> = candidates.iter().map(|&i| prune_weight(s_p[i], eps_prune)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample_without_replacement(&weights, budget, &mut rng);

    let mut keep = vec![true; cloud.len()];
    let mut removed: Vec<usize> = picked.iter().map(|&j| candidates[j]).collect();
    removed.sort_unstable();
    for &i in &removed {
        keep[i] = false;
    }
    Ok(PruneOutcome {
        cloud: cloud.select(&keep),
        removed,
        candidates: candidates.len(),
        requested: budget,
        clamped,
    })
}
