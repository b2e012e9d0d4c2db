//! Deterministic synthetic scenes: random splats in the unit cube, each
//! repeated with a small positional jitter, seen by a ring of cameras.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{logit, sh_coeff_count, GaussianCloud, SH_C0};
use crate::io::camera::Camera;

/// Jitter standard deviation as a fraction of a splat's mean scale.
pub const JITTER_FRACTION: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub seed: u64,
    pub n_gaussians: usize,
    pub duplication_factor: usize,
    pub n_cameras: usize,
    /// Square image side for the generated cameras.
    pub resolution: u32,
    pub sh_degree: u8,
    /// Per-axis scales are drawn log-uniformly from this range.
    pub scale_range: (f64, f64),
    pub opacity_range: (f64, f64),
}

impl SynthParams {
    pub fn new(seed: u64, n_gaussians: usize, duplication_factor: usize, n_cameras: usize) -> Self {
        SynthParams {
            seed,
            n_gaussians,
            duplication_factor,
            n_cameras,
            resolution: 256,
            sh_degree: 0,
            scale_range: (0.01, 0.04),
            opacity_range: (0.3, 0.9),
        }
    }
}

/// Rounds through `f32` so PLY storage is exact.
fn q(v: f64) -> f64 {
    v as f32 as f64
}

pub fn synth_scene(p: &SynthParams) -> Result<(GaussianCloud, Vec<Camera>)> {
    if p.n_gaussians == 0 || p.duplication_factor == 0 {
        return Err(Error::invalid("synth_scene needs n ≥ 1 and duplication_factor ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let stride = sh_coeff_count(p.sh_degree);
    let n_total = p.n_gaussians * p.duplication_factor;
    let mut cloud = GaussianCloud::with_capacity(p.sh_degree, n_total)?;
    let (ls_lo, ls_hi) = (p.scale_range.0.ln(), p.scale_range.1.ln());

    for _ in 0..p.n_gaussians {
        let mean = Vector3::from_fn(|_, _| 0.1 + 0.8 * rng.random::<f64>());
        let log_scales = Vector3::from_fn(|_, _| ls_lo + (ls_hi - ls_lo) * rng.random::<f64>());

        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let rotation = [
            (1.0 - u1).sqrt() * (TAU * u2).sin(),
            (1.0 - u1).sqrt() * (TAU * u2).cos(),
            u1.sqrt() * (TAU * u3).sin(),
            u1.sqrt() * (TAU * u3).cos(),
        ]
        .map(q);

        let alpha = p.opacity_range.0 + (p.opacity_range.1 - p.opacity_range.0) * rng.random::<f64>();
        let mut sh = vec![0.0; stride];
        for c in sh.iter_mut().take(3) {
            let color = 0.05 + 0.9 * rng.random::<f64>();
            *c = q((color - 0.5) / SH_C0);
        }
        for c in sh.iter_mut().skip(3) {
            *c = q(0.05 * rng.sample::<f64, _>(StandardNormal));
        }

        let sigma = JITTER_FRACTION * log_scales.map(f64::exp).mean();
        for _ in 0..p.duplication_factor {
            let jitter = Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal));
            cloud.means.push((mean + jitter).map(q));
            cloud.rotations.push(rotation);
            cloud.log_scales.push(log_scales.map(q));
            cloud.opacity_logits.push(q(logit(alpha)));
            cloud.sh.extend_from_slice(&sh);
        }
    }

    Ok((cloud, ring_cameras(p.n_cameras, p.resolution)))
}

/// `n` cameras on an elevated ring around the unit cube, all aimed at its centre.
pub fn ring_cameras(n: usize, resolution: u32) -> Vec<Camera> {
    let center = Vector3::new(0.5, 0.5, 0.5);
    let focal = 1.1 * resolution as f64;
    (0..n)
        .map(|i| {
            let phi = TAU * i as f64 / n as f64;
            let eye = center + Vector3::new(2.0 * phi.cos(), 2.0 * phi.sin(), 0.6);
            Camera::look_at(eye, center, Vector3::z(), resolution, resolution, focal)
        })
        .collect()
}
