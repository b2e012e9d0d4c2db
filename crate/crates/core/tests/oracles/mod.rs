//! Brute-force oracle suites shared by the integration and acceptance tests.
//! Each check returns a one-line summary on success and the first violation
//! on failure.

#![allow(dead_code, clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use std::time::Instant;

use gsc_core::densify::{eta_residual, split_gaussian, SplitConfig};
use gsc_core::gaussian::{logit, GaussianPrimitive};
use gsc_core::io::{synth_scene, Camera, ImageBuffer, SynthParams};
use gsc_core::partition::build_balanced_kdtree;
use gsc_core::ranking::texture::LUMA;
use gsc_core::ranking::{budgeted_prune, error_mask, rank_cloud, PruneFilters, RankingConfig};
use gsc_core::render::metrics::psnr;
use gsc_core::render::{project_cloud, render, splat_alpha, RenderSettings};
use gsc_core::transport::{aggregate_cloud, bures_wasserstein_sq, gelbrich_sq, TransportConfig};
use gsc_core::{Covariance3, GaussianCloud};
use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = nalgebra::Quaternion::new(
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// SPD matrix with eigenvalues log-uniform in `[1e-2, 1e2]`, so condition ≤ 1e4.
fn random_spd(rng: &mut impl Rng, basis: &Matrix3<f64>) -> Matrix3<f64> {
    let d = Vector3::from_fn(|_, _| 10f64.powf(rng.random_range(-2.0..2.0)));
    let m = basis * Matrix3::from_diagonal(&d) * basis.transpose();
    (m + m.transpose()) * 0.5
}

/// Symmetric square root via nalgebra's own eigensolver.
fn sqrtm(m: &Matrix3<f64>) -> Matrix3<f64> {
    let e = m.symmetric_eigen();
    e.eigenvectors * Matrix3::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt())) * e.eigenvectors.transpose()
}

fn bw_oracle(ma: &Vector3<f64>, a: &Matrix3<f64>, mb: &Vector3<f64>, b: &Matrix3<f64>) -> f64 {
    let ra = sqrtm(a);
    let cross = sqrtm(&(ra * b * ra));
    (ma - mb).norm_squared() + a.trace() + b.trace() - 2.0 * cross.trace()
}

fn gelbrich_oracle(ma: &Vector3<f64>, a: &Matrix3<f64>, mb: &Vector3<f64>, b: &Matrix3<f64>) -> f64 {
    (ma - mb).norm_squared() + (sqrtm(a) - sqrtm(b)).norm_squared()
}

pub fn distance_suite() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..1000 {
        let (ra, rb) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let (a, b) = (random_spd(&mut rng, &ra), random_spd(&mut rng, &rb));
        let ma = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mb = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let bw = bures_wasserstein_sq(&ma, &a, &mb, &b).map_err(|e| e.to_string())?;
        let g = gelbrich_sq(&ma, &a, &mb, &b).map_err(|e| e.to_string())?;
        ensure!(bw <= g + 1e-9, "pair {i}: BW {bw} exceeds Gelbrich {g}");
        let (bo, go) = (bw_oracle(&ma, &a, &mb, &b), gelbrich_oracle(&ma, &a, &mb, &b));
        ensure!((bw - bo).abs() <= 1e-7 * (1.0 + bo), "pair {i}: BW {bw} vs oracle {bo}");
        ensure!((g - go).abs() <= 1e-7 * (1.0 + go), "pair {i}: Gelbrich {g} vs oracle {go}");
        worst_gap = worst_gap.max(bw - g);
    }
    let mut worst_commuting: f64 = 0.0;
    for i in 0..200 {
        let basis = random_rotation(&mut rng);
        let (a, b) = (random_spd(&mut rng, &basis), random_spd(&mut rng, &basis));
        let ma = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mb = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let bw = bures_wasserstein_sq(&ma, &a, &mb, &b).map_err(|e| e.to_string())?;
        let g = gelbrich_sq(&ma, &a, &mb, &b).map_err(|e| e.to_string())?;
        let rel = (g - bw).abs() / (1.0 + bw);
        ensure!(rel <= 1e-8, "commuting pair {i}: |G − W| = {} (rel {rel:e})", (g - bw).abs());
        worst_commuting = worst_commuting.max(rel);
    }
    // Fixed non-commuting case; 2×2 closed form √(tr + 2√det) for the coupled block.
    let z = Vector3::zeros();
    let a = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
    let b = Matrix3::new(2.5, 1.5, 0.0, 1.5, 2.5, 0.0, 0.0, 0.0, 1.0);
    let expected = 12.0 - 2.0 * ((12.5f64 + 8.0).sqrt() + 1.0);
    let bw = bures_wasserstein_sq(&z, &a, &z, &b).map_err(|e| e.to_string())?;
    let g = gelbrich_sq(&z, &a, &z, &b).map_err(|e| e.to_string())?;
    ensure!((bw - expected).abs() < 1e-10 && (bw - 0.9446).abs() < 1e-4, "fixed case BW {bw}, expected {expected}");
    ensure!((g - 1.0).abs() < 1e-10, "fixed case Gelbrich {g}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!(
        "max BW−G {worst_gap:.2e}, max commuting rel gap {worst_commuting:.1e}, fixed {bw:.4}/{g:.4}, {secs:.2} s"
    ))
}

pub fn moment_suite() -> Check {
    let start = Instant::now();
    let (cloud, _) = synth_scene(&SynthParams::new(1, 1000, 10, 0)).map_err(|e| e.to_string())?;
    let cfg = TransportConfig {
        sample_ratio: 0.1,
        ..Default::default()
    };
    let agg = aggregate_cloud(&cloud, &cfg).map_err(|e| e.to_string())?;
    let k = agg.cloud.len();
    let mut mass = vec![0.0; k];
    let mut first = vec![Vector3::zeros(); k];
    let mut second = vec![Matrix3::zeros(); k];
    for i in 0..cloud.len() {
        let (j, w) = (agg.assignment[i], agg.weights[i]);
        let mu = cloud.means[i];
        let cov = *cloud.covariance(i).map_err(|e| e.to_string())?.matrix();
        mass[j] += w;
        first[j] += w * mu;
        second[j] += w * (cov + mu * mu.transpose());
    }
    let mut worst: f64 = 0.0;
    for j in 0..k {
        ensure!(mass[j] > 0.0, "target {j} received no mass");
        let mean = first[j] / mass[j];
        let m2 = second[j] / mass[j];
        let mu = agg.raw_means[j];
        let e_mean = (mean - mu).norm() / mean.norm().max(1e-300);
        let model = agg.raw_covs[j] + mu * mu.transpose();
        let e_m2 = (m2 - model).norm() / m2.norm();
        ensure!(e_mean <= 1e-8 && e_m2 <= 1e-8, "target {j}: mean rel {e_mean:e}, second moment rel {e_m2:e}");
        worst = worst.max(e_mean).max(e_m2);
    }
    let (n, m) = (cloud.len(), agg.blocks.len());
    let diff = (k as f64 - n as f64 / 10.0).abs();
    ensure!(diff <= m as f64, "output size {k} is {diff} from N/10 = {}, more than M = {m}", n / 10);
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.2} s");
    Ok(format!("{n} → {k} in {m} blocks, worst moment rel error {worst:.1e}, {secs:.2} s"))
}

/// Per-duplicate-group moment match of the dup-10 fixture, rendered the same way.
fn oracle_merge(cloud: &GaussianCloud, dup: usize, coverage: bool) -> Result<GaussianCloud, String> {
    let mut out = GaussianCloud::with_capacity(cloud.sh_degree(), cloud.len() / dup).map_err(|e| e.to_string())?;
    for base in 0..cloud.len() / dup {
        let members: Vec<usize> = (base * dup..(base + 1) * dup).collect();
        let w: Vec<f64> = members.iter().map(|&i| cloud.opacity(i) + 1e-6).collect();
        let total: f64 = w.iter().sum();
        let mean = members.iter().zip(&w).map(|(&i, &wi)| wi * cloud.means[i]).sum::<Vector3<f64>>() / total;
        let mut cov = Matrix3::zeros();
        for (&i, wi) in members.iter().zip(&w) {
            let d = cloud.means[i] - mean;
            cov += *wi * (*cloud.covariance(i).map_err(|e| e.to_string())?.matrix() + d * d.transpose());
        }
        cov /= total;
        let alpha = if coverage {
            1.0 - members.iter().map(|&i| 1.0 - cloud.opacity(i)).product::<f64>()
        } else {
            members.iter().zip(&w).map(|(&i, wi)| wi * cloud.opacity(i)).sum::<f64>() / total
        };
        let (q, scales) = Covariance3::from_matrix(cov).map_err(|e| e.to_string())?.rotation_and_scales();
        let g = GaussianPrimitive::new(
            mean,
            [q.w, q.i, q.j, q.k],
            scales.map(f64::ln),
            logit(alpha.clamp(1e-7, 1.0 - 1e-7)),
            cloud.sh_of(members[0]).to_vec(),
        )
        .map_err(|e| e.to_string())?;
        out.push(g).map_err(|e| e.to_string())?;
    }
    Ok(out)
}

fn mean_psnr(a: &GaussianCloud, reference: &[ImageBuffer], cams: &[Camera]) -> Result<f64, String> {
    let mut sum = 0.0;
    for (cam, r) in cams.iter().zip(reference) {
        sum += psnr(&render(a, cam).map_err(|e| e.to_string())?, r).map_err(|e| e.to_string())?;
    }
    Ok(sum / cams.len() as f64)
}

pub const FIDELITY_THRESHOLD_DB: f64 = 30.0;

pub fn fidelity_suite() -> Check {
    let start = Instant::now();
    let dup = 10;
    let (cloud, cams) = synth_scene(&SynthParams::new(1, 1000, dup, 8)).map_err(|e| e.to_string())?;
    let reference: Vec<ImageBuffer> = cams
        .iter()
        .map(|c| render(&cloud, c))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let cfg = TransportConfig {
        sample_ratio: 0.1,
        ..Default::default()
    };
    let agg = aggregate_cloud(&cloud, &cfg).map_err(|e| e.to_string())?;
    let measured = mean_psnr(&agg.cloud, &reference, &cams)?;
    let ceiling_mean = mean_psnr(&oracle_merge(&cloud, dup, false)?, &reference, &cams)?;
    let ceiling_cov = mean_psnr(&oracle_merge(&cloud, dup, true)?, &reference, &cams)?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "mean PSNR {measured:.2} dB over {} views ({} → {}); per-cluster oracle merge {ceiling_mean:.2} dB \
         (coverage opacity {ceiling_cov:.2} dB); {secs:.1} s",
        cams.len(),
        cloud.len(),
        agg.cloud.len()
    );
    ensure!(secs < 120.0, "too slow: {detail}");
    ensure!(measured >= FIDELITY_THRESHOLD_DB, "below {FIDELITY_THRESHOLD_DB} dB: {detail}");
    Ok(detail)
}

pub fn split_suite() -> Check {
    let cfg = SplitConfig::default();
    let eta = cfg.eta;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut w_mid, mut w_principal, mut w_off): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..1000 {
        let mean = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let log_scales = Vector3::from_fn(|_, _| rng.random_range(-4.0f64..0.5));
        let q = [0.0; 4].map(|_| rng.random::<f64>() - 0.5);
        let g = GaussianPrimitive::new(mean, q, log_scales, logit(0.6), vec![0.2, 0.1, -0.3])
            .map_err(|e| e.to_string())?;
        let (a, b) = split_gaussian(&g, &cfg).map_err(|e| e.to_string())?;

        let mid = 0.5 * (a.mean + b.mean);
        let delta = (a.mean - b.mean).norm();
        let e_mid = (mid - g.mean).norm();
        ensure!(
            e_mid <= 8.0 * f64::EPSILON * (g.mean.norm() + delta),
            "parent {i}: midpoint off by {e_mid:e}"
        );

        let parent = *g.covariance().map_err(|e| e.to_string())?.matrix();
        let mut mix = Matrix3::zeros();
        for c in [&a, &b] {
            let d = c.mean - mid;
            mix += 0.5 * (*c.covariance().map_err(|e| e.to_string())?.matrix() + d * d.transpose());
        }
        // Oracle eigenbasis from nalgebra, independent of the crate's solver.
        let eig = parent.symmetric_eigen();
        let k = eig.eigenvalues.imax();
        for j in 0..3 {
            let v = eig.eigenvectors.column(j);
            let var = (v.transpose() * mix * v)[0];
            let lambda = eig.eigenvalues[j];
            if j == k {
                let e = (var - lambda).abs() / lambda;
                ensure!(e <= 1e-9, "parent {i}: principal second moment rel error {e:e}");
                w_principal = w_principal.max(e);
            } else {
                let e = (var - (1.0 - eta * eta) * lambda).abs() / lambda;
                ensure!(e <= 1e-9, "parent {i}: off-axis contraction rel error {e:e}");
                w_off = w_off.max(e);
            }
        }
        let vk = eig.eigenvectors.column(k);
        let perp = parent - eig.eigenvalues[k] * vk * vk.transpose();
        let e = (mix - (parent - eta * eta * perp)).norm() / parent.norm();
        ensure!(e <= 1e-9, "parent {i}: mixture covariance rel error {e:e}");
        w_mid = w_mid.max(e_mid);
    }

    let g = GaussianPrimitive::new(
        Vector3::zeros(),
        [1.0, 0.0, 0.0, 0.0],
        Vector3::new(2.0f64.ln(), 0.0, 0.0),
        logit(0.5),
        vec![0.0; 3],
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = split_gaussian(&g, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        (a.mean - Vector3::new(0.9, 0.0, 0.0)).norm() < 1e-12 && (b.mean + Vector3::new(0.9, 0.0, 0.0)).norm() < 1e-12,
        "fixed example means {:?} {:?}",
        a.mean,
        b.mean
    );
    for (s, printed) in a.scales().iter().zip([1.786056, 0.893028, 0.893028]) {
        ensure!((s - printed).abs() < 1.5e-6, "fixed example scale {s} vs {printed}");
    }

    let f0 = eta_residual(0.0).map_err(|e| e.to_string())?;
    let f45 = eta_residual(0.45).map_err(|e| e.to_string())?;
    ensure!(f0 == 0.0, "f(0) = {f0}");
    ensure!((0.0120..=0.0125).contains(&f45), "f(0.45) = {f45}");
    for i in 1..1000 {
        let eta = i as f64 * 1e-3;
        let f = eta_residual(eta).map_err(|e| e.to_string())?;
        ensure!(f > 0.0, "f({eta}) = {f}");
    }
    ensure!(eta_residual(1.0).is_err(), "f(1) should be a domain error");
    Ok(format!(
        "1000 parents: midpoint {w_mid:.1e}, principal {w_principal:.1e}, off-axis {w_off:.1e}; f(0.45) = {f45:.6}"
    ))
}

pub fn kd_balance_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 100_000;
    let pos: Vec<_> = (0..n)
        .map(|_| Vector3::new(rng.random(), rng.random::<f64>() * 3.0, rng.random::<f64>() * 0.5))
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3) * 10.0).collect();
    let p = build_balanced_kdtree(&pos, &w, 10).map_err(|e| e.to_string())?;
    let total: f64 = w.iter().sum();
    let mut worst: f64 = 0.0;
    for s in &p.splits {
        let gap = (s.weight_left - s.weight_right).abs();
        ensure!(s.n_left > 0 && s.n_right > 0, "empty child at level {}", s.level);
        ensure!(
            gap <= s.max_weight + 1e-12 * total,
            "level {} split gap {gap} exceeds max weight {}",
            s.level,
            s.max_weight
        );
        worst = worst.max(gap / s.max_weight);
    }
    ensure!(p.n_blocks() == 1024, "{} blocks at depth 10", p.n_blocks());
    ensure!(p.blocks().iter().map(Vec::len).sum::<usize>() == n, "blocks do not tile the input");
    Ok(format!("{} splits, worst gap/max weight {worst:.3}", p.splits.len()))
}

fn lum_at(img: &ImageBuffer, x: isize, y: isize) -> f64 {
    let cx = x.clamp(0, img.width() as isize - 1) as usize;
    let cy = y.clamp(0, img.height() as isize - 1) as usize;
    (0..3).map(|c| LUMA[c] * img.get(cx, cy, c)).sum()
}

/// Per-pixel mask oracle written out from the definitions.
pub fn mask_oracle(rendered: &ImageBuffer, gt: &ImageBuffer, cfg: &RankingConfig) -> Vec<bool> {
    let texture = |img: &ImageBuffer| {
        let mut raw = Vec::new();
        for y in 0..img.height() as isize {
            for x in 0..img.width() as isize {
                let l = |dx: isize, dy: isize| lum_at(img, x + dx, y + dy);
                let gx = -l(-1, -1) + l(1, -1) - 2.0 * l(-1, 0) + 2.0 * l(1, 0) - l(-1, 1) + l(1, 1);
                let gy = -l(-1, -1) - 2.0 * l(0, -1) - l(1, -1) + l(-1, 1) + 2.0 * l(0, 1) + l(1, 1);
                let lap = l(0, -1) + l(-1, 0) - 4.0 * l(0, 0) + l(1, 0) + l(0, 1);
                raw.push((gx * gx + gy * gy + cfg.eps).sqrt() + cfg.lambda * lap.abs());
            }
        }
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        raw.iter()
            .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect::<Vec<_>>()
    };
    let (ta, tb) = (texture(rendered), texture(gt));
    let mut out = Vec::new();
    for y in 0..rendered.height() {
        for x in 0..rendered.width() {
            let i = y * rendered.width() + x;
            let photo = (0..3).any(|c| (rendered.get(x, y, c) - gt.get(x, y, c)).abs() > cfg.tau2);
            out.push(photo && (ta[i] - tb[i]).abs() > cfg.tau1);
        }
    }
    out
}

fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> ImageBuffer {
    let blobs: Vec<([f64; 2], f64, [f64; 3])> = (0..4)
        .map(|_| {
            (
                [rng.random::<f64>() * w as f64, rng.random::<f64>() * h as f64],
                rng.random_range(2.0..8.0),
                [rng.random(), rng.random(), rng.random()],
            )
        })
        .collect();
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut v = 0.1;
                for (center, s, color) in &blobs {
                    let d2 = (x as f64 - center[0]).powi(2) + (y as f64 - center[1]).powi(2);
                    v += color[c] * (-0.5 * d2 / (s * s)).exp();
                }
                px.push((v + 0.02 * rng.random::<f64>()).clamp(0.0, 1.0));
            }
        }
    }
    ImageBuffer::from_vec(w, h, 3, px).unwrap()
}

/// Error-mask equality with the oracle on 20 random pairs.
pub fn mask_pairs_suite() -> Check {
    let cfg = RankingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut on, mut total) = (0usize, 0usize);
    for pair in 0..20 {
        let (w, h) = (rng.random_range(8..48), rng.random_range(8..48));
        let gt = random_image(&mut rng, w, h);
        let mut rendered = gt.clone();
        // A random rectangle repainted with a shifted colour.
        let (x0, y0) = (rng.random_range(0..w - 2), rng.random_range(0..h - 2));
        let (x1, y1) = (rng.random_range(x0 + 1..w), rng.random_range(y0 + 1..h));
        let shift = [0.0; 3].map(|_| rng.random_range(-0.4..0.4));
        for y in y0..=y1 {
            for x in x0..=x1 {
                for c in 0..3 {
                    rendered.set(x, y, c, (gt.get(x, y, c) + shift[c]).clamp(0.0, 1.0));
                }
            }
        }
        let mask = error_mask(&rendered, &gt, &cfg).map_err(|e| e.to_string())?;
        let oracle = mask_oracle(&rendered, &gt, &cfg);
        for (i, (m, o)) in mask.pixels().iter().zip(&oracle).enumerate() {
            ensure!((*m > 0.5) == *o, "pair {pair}: pixel {i} mask {m} vs oracle {o}");
        }
        on += oracle.iter().filter(|o| **o).count();
        total += oracle.len();
    }
    ensure!(on > 0 && on < total, "degenerate masks: {on} of {total} set");
    Ok(format!("20 pairs, {on}/{total} pixels masked"))
}

fn quantized(img: &ImageBuffer) -> ImageBuffer {
    ImageBuffer::from_bytes(img.width(), img.height(), img.channels(), &img.to_bytes()).unwrap()
}

/// Deficiency counts recomputed pixel by pixel over every projected splat.
pub fn recount(cloud: &GaussianCloud, cams: &[Camera], gt: &[ImageBuffer], cfg: &RankingConfig) -> Vec<u64> {
    let settings = RenderSettings::default();
    let mut counts = vec![0u64; cloud.len()];
    for (cam, g) in cams.iter().zip(gt) {
        let rendered = render(cloud, cam).unwrap();
        let mask = mask_oracle(&rendered, g, cfg);
        let splats = project_cloud(cloud, cam, &settings).unwrap();
        for y in 0..cam.height as usize {
            for x in 0..cam.width as usize {
                if !mask[y * cam.width as usize + x] {
                    continue;
                }
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let mut trans = 1.0;
                for s in &splats {
                    let a = splat_alpha(s, &p, settings.alpha_clamp);
                    if a < settings.min_alpha {
                        continue;
                    }
                    if a * trans > cfg.eps_v {
                        counts[s.source_index] += 1;
                    }
                    trans *= 1.0 - a;
                    if trans < settings.min_transmittance {
                        break;
                    }
                }
            }
        }
    }
    counts
}

fn sparse_scene(seed: u64, n: usize) -> (GaussianCloud, Vec<Camera>) {
    let params = SynthParams {
        resolution: 96,
        scale_range: (0.01, 0.04),
        opacity_range: (0.6, 0.95),
        ..SynthParams::new(seed, n, 1, 4)
    };
    synth_scene(&params).unwrap()
}

pub fn self_render_suite() -> Check {
    let (mut cloud, cams) = sparse_scene(21, 150);
    let gt: Vec<_> = cams.iter().map(|c| quantized(&render(&cloud, c).unwrap())).collect();
    rank_cloud(&mut cloud, &cams, &gt, &RankingConfig::default()).map_err(|e| e.to_string())?;
    let s = &cloud.scores;
    ensure!(s.deficiency.as_ref().unwrap().iter().all(|c| *c == 0), "non-zero C on self-render");
    ensure!(s.densify.as_ref().unwrap().iter().all(|c| *c == 0), "non-zero S_d on self-render");
    ensure!(s.prune.as_ref().unwrap().iter().all(|c| *c == 0.0), "non-zero S_p on self-render");
    Ok(format!("{} splats, {} views all zero", cloud.len(), cams.len()))
}

pub fn deleted_splat_suite() -> Check {
    let cfg = RankingConfig::default();
    let (full, cams) = sparse_scene(22, 150);
    let gt: Vec<_> = cams.iter().map(|c| quantized(&render(&full, c).unwrap())).collect();
    // Drop the splats nearest the scene centre.
    let centre = Vector3::repeat(0.5);
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.sort_by(|&a, &b| (full.means[a] - centre).norm().total_cmp(&(full.means[b] - centre).norm()));
    let deleted: Vec<usize> = order[..4].to_vec();
    let keep: Vec<bool> = (0..full.len()).map(|i| !deleted.contains(&i)).collect();
    let mut cloud = full.select(&keep);
    let survivors: Vec<usize> = (0..full.len()).filter(|&i| keep[i]).collect();

    let d = rank_cloud(&mut cloud, &cams, &gt, &cfg).map_err(|e| e.to_string())?;
    let oracle = recount(&cloud, &cams, &gt, &cfg);
    ensure!(d.counts == oracle, "deficiency counts differ from the per-pixel recount");
    let s_d = cloud.scores.densify.as_ref().unwrap();
    for (i, c) in oracle.iter().enumerate() {
        ensure!(s_d[i] == c / cams.len() as u64, "S_d[{i}] = {} for C = {c}", s_d[i]);
    }

    // Distant: footprint clear of every deleted footprint in every view.
    let settings = RenderSettings::default();
    let mut distant = vec![true; cloud.len()];
    for cam in &cams {
        let all = project_cloud(&full, cam, &settings).unwrap();
        let holes: Vec<_> = all.iter().filter(|p| deleted.contains(&p.source_index)).collect();
        for p in all.iter().filter(|p| keep[p.source_index]) {
            let j = survivors.binary_search(&p.source_index).unwrap();
            if holes.iter().any(|h| (p.mean2d - h.mean2d).norm() <= p.radius + h.radius + 3.0) {
                distant[j] = false;
            }
        }
    }
    let hit = oracle.iter().filter(|c| **c > 0).count();
    let n_distant = distant.iter().filter(|d| **d).count();
    ensure!(hit > 0, "no survivor gained deficiency votes");
    ensure!(n_distant > 0, "fixture has no distant splats");
    for (j, c) in oracle.iter().enumerate() {
        ensure!(!distant[j] || *c == 0, "distant splat {j} has C = {c}");
    }
    Ok(format!(
        "{} deleted, {hit} survivors with C > 0, {n_distant} distant all zero, recount exact",
        deleted.len()
    ))
}

pub fn ranking_suite() -> Check {
    let a = self_render_suite()?;
    let b = deleted_splat_suite()?;
    let c = mask_pairs_suite()?;
    Ok(format!("{a}; {b}; {c}"))
}

fn line_cloud(n: usize) -> GaussianCloud {
    GaussianCloud::from_primitives(
        0,
        (0..n).map(|i| {
            GaussianPrimitive::new(
                Vector3::new(i as f64, 0.0, 0.0),
                [1.0, 0.0, 0.0, 0.0],
                Vector3::repeat(0.05f64.ln()),
                logit(0.5),
                vec![0.0; 3],
            )
            .unwrap()
        }),
    )
    .unwrap()
}

/// Removal frequencies over `draws` seeds with budget 1.
fn removal_frequencies(cloud: &GaussianCloud, s_p: &[f64], draws: u64) -> Result<Vec<f64>, String> {
    let mut hits = vec![0u64; cloud.len()];
    for seed in 0..draws {
        let out = budgeted_prune(cloud, s_p, 1, seed, &PruneFilters::default(), 1e-3).map_err(|e| e.to_string())?;
        ensure!(out.removed.len() == 1, "seed {seed}: removed {}", out.removed.len());
        hits[out.removed[0]] += 1;
    }
    Ok(hits.iter().map(|h| *h as f64 / draws as f64).collect())
}

pub fn prune_suite() -> Check {
    let draws = 100_000;
    let w = |s: f64| 1.0 / (1e-3 + (1.0 - s));

    let two = line_cloud(2);
    let s_p = [0.0, 0.999];
    let freq = removal_frequencies(&two, &s_p, draws)?;
    let expected = w(s_p[1]) / (w(s_p[0]) + w(s_p[1]));
    ensure!((freq[1] - expected).abs() <= 0.01, "two-candidate: {} vs {expected}", freq[1]);

    let ten = line_cloud(10);
    let uniform = removal_frequencies(&ten, &[0.3; 10], draws)?;
    let worst = uniform.iter().map(|f| (f - 0.1).abs()).fold(0.0, f64::max);
    ensure!(worst <= 0.01, "uniform: frequency off by {worst}");

    for budget in [0, 3, 10] {
        let out = budgeted_prune(&ten, &[0.3; 10], budget, 7, &PruneFilters::default(), 1e-3).map_err(|e| e.to_string())?;
        ensure!(out.removed.len() == budget && out.cloud.len() == 10 - budget, "budget {budget} not removed exactly");
    }
    let a = budgeted_prune(&ten, &[0.3; 10], 4, 99, &PruneFilters::default(), 1e-3).map_err(|e| e.to_string())?;
    let b = budgeted_prune(&ten, &[0.3; 10], 4, 99, &PruneFilters::default(), 1e-3).map_err(|e| e.to_string())?;
    ensure!(a.removed == b.removed, "same seed gave different removals");
    Ok(format!(
        "two-candidate {:.4} (expected {expected:.4}), uniform max deviation {worst:.4}",
        freq[1]
    ))
}
