//! Moment-matched splitting of deficient splats.

use nalgebra::Vector3;

use crate::covariance::principal_axis;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianCloud, GaussianPrimitive};

pub const DEFAULT_ETA: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Every axis shrinks by `√(1−η²)`.
    #[default]
    Contractive,
    /// Only the principal axis shrinks, so the mixture keeps the parent covariance.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub eta: f64,
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            eta: DEFAULT_ETA,
            mode: SplitMode::default(),
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Domain {
                what: "split factor eta (0 < eta < 1)",
                value: self.eta,
            });
        }
        Ok(())
    }
}

/// Splits `g` into two children offset by `±η·s_k` along its principal axis.
/// Opacity and SH are copied.
pub fn split_gaussian(g: &GaussianPrimitive, cfg: &SplitConfig) -> Result<(GaussianPrimitive, GaussianPrimitive)> {
    cfg.validate()?;
    g.validate()?;
    let (s_k, axis) = principal_axis(&g.covariance()?);
    let offset = cfg.eta * s_k * axis;
    let log_shrink = 0.5 * (1.0 - cfg.eta * cfg.eta).ln();

    let mut log_scales = g.log_scales;
    match cfg.mode {
        SplitMode::Contractive => log_scales.add_scalar_mut(log_shrink),
        SplitMode::Strict => {
            // Stored axis best aligned with the principal direction.
            let r = g.rotation_matrix()?;
            let k = (0..3)
                .map(|j| r.column(j).dot(&axis).abs())
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, c)| if c > best.1 { (j, c) } else { best })
                .0;
            log_scales[k] += log_shrink;
        }
    }
    let child = |mean: Vector3<f64>| GaussianPrimitive {
        mean,
        rotation: g.rotation,
        log_scales,
        opacity_logit: g.opacity_logit,
        sh_coeffs: g.sh_coeffs.clone(),
    };
    Ok((child(g.mean + offset), child(g.mean - offset)))
}

/// Replaces every primitive with `S_d ≥ 1` by its two children. Unmarked
/// primitives keep their order; children follow in parent order.
pub fn split_marked(cloud: &GaussianCloud, cfg: &SplitConfig) -> Result<GaussianCloud> {
    cfg.validate()?;
    let s_d = cloud
        .scores
        .densify
        .as_ref()
        .ok_or_else(|| Error::invalid("splitting needs the densification score channel"))?;
    if s_d.len() != cloud.len() {
        return Err(Error::invalid("densification channel length mismatch"));
    }
    let marked: Vec<bool> = s_d.iter().map(|&s| s >= 1).collect();
    let n_marked = marked.iter().filter(|m| **m).count();
    if n_marked == 0 {
        return Ok(cloud.clone());
    }
    let mut out = cloud.select(&marked.iter().map(|m| !m).collect::<Vec<_>>());
    out.scores = Default::default();
    for (i, _) in marked.iter().enumerate().filter(|(_, m)| **m) {
        let (a, b) = split_gaussian(&cloud.get(i), cfg)?;
        out.push(a)?;
        out.push(b)?;
    }
    log::info!("split {n_marked} primitive(s): {} → {}", cloud.len(), out.len());
    Ok(out)
}

/// `√(1−η²) − exp(−η²/(2(1−η²)))`, the residual of the transcendental
/// relation that motivates `η`. Positive on `(0, 1)`.
pub fn eta_residual(eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Domain {
            what: "eta residual (0 <= eta < 1)",
            value: eta,
        });
    }
    let c = 1.0 - eta * eta;
    Ok(c.sqrt() - (-eta * eta / (2.0 * c)).exp())
}
