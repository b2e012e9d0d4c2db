//! Optimal-transport aggregation of redundant splats.
//!
//! Inside each block of an importance-balanced partition, `n` sources are
//! hard-assigned to `k` targets under the Gelbrich cost, and every target is
//! replaced by the moment-matched Gaussian of its cluster. The two steps
//! alternate for a few iterations.

mod distance;

use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;

use crate::covariance::Covariance3;
use crate::error::{Error, Result};
use crate::gaussian::{logit, GaussianCloud, GaussianPrimitive};
use crate::partition::{build_balanced_kdtree, contribution_weights, DEFAULT_WEIGHT_FLOOR};

pub use distance::{bures_wasserstein_sq, gelbrich_sq};
use distance::{embed, embedded_cost, Embedding};

/// How the `k` targets of a block are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetInit {
    /// The `k` heaviest sources, ties to the lower index.
    #[default]
    TopWeight,
    /// Heaviest source first, then repeatedly the source maximising
    /// weight × cost to its nearest seed.
    FarthestPoint,
}

/// How member opacities combine into the merged opacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpacityMerge {
    /// Mass-weighted mean of activated opacities.
    #[default]
    WeightedMean,
    /// `1 − Π(1 − α_i)`: the merged splat covers what the stack covered.
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    /// Retained fraction `K/N`, applied per block.
    pub sample_ratio: f64,
    pub kd_depth: usize,
    pub em_iters: usize,
    /// Stop once an E-step reproduces the previous assignment.
    pub early_stop: bool,
    /// `ε_w` in the contribution weights.
    pub weight_floor: f64,
    pub init: TargetInit,
    pub opacity: OpacityMerge,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            sample_ratio: 0.8,
            kd_depth: 10,
            em_iters: 5,
            early_stop: true,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            init: TargetInit::default(),
            opacity: OpacityMerge::default(),
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "sample ratio must lie in (0, 1], got {}",
                self.sample_ratio
            )));
        }
        if self.em_iters == 0 {
            return Err(Error::invalid("at least one EM iteration is required"));
        }
        if !(self.weight_floor >= 0.0) {
            return Err(Error::invalid("weight floor must be non-negative"));
        }
        Ok(())
    }
}

/// Hard transport plan: source `i` sends mass `mass[i]` to `assignment[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub assignment: Vec<usize>,
    pub mass: Vec<f64>,
}

/// A moment-matched target.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedTarget {
    pub primitive: GaussianPrimitive,
    pub mass: f64,
    /// Mixture mean before storage round-trips.
    pub raw_mean: Vector3<f64>,
    /// Mixture covariance before the SPD floor.
    pub raw_cov: Matrix3<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockResult {
    pub targets: Vec<MergedTarget>,
    /// Target of each source, in input order.
    pub assignment: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub estep_secs: f64,
    pub mstep_secs: f64,
}

/// Per-source geometry, computed once.
#[derive(Debug, Clone, Copy)]
struct SourceGeom {
    mean: Vector3<f64>,
    cov: Matrix3<f64>,
    emb: Embedding,
}

fn source_geom(cloud: &GaussianCloud, i: usize) -> Result<SourceGeom> {
    let r = crate::covariance::rotation_matrix(cloud.rotations[i])?;
    let s = cloud.scales(i);
    let root = r * Matrix3::from_diagonal(&s) * r.transpose();
    let root = (root + root.transpose()) * 0.5;
    let cov = *cloud.covariance(i)?.matrix();
    Ok(SourceGeom {
        mean: cloud.means[i],
        cov,
        emb: embed(&cloud.means[i], &root),
    })
}

fn prepare(cloud: &GaussianCloud) -> Result<Vec<SourceGeom>> {
    (0..cloud.len()).into_par_iter().map(|i| source_geom(cloud, i)).collect()
}

fn cloud_of(sources: &[GaussianPrimitive]) -> Result<GaussianCloud> {
    let degree = match sources.first() {
        Some(g) => g.sh_degree()?,
        None => 0,
    };
    GaussianCloud::from_primitives(degree, sources.iter().cloned())
}

/// `C_ij = d_G²(source_i, target_j)` with `Σ^{1/2}` read off the stored frames.
pub fn cost_matrix(sources: &[GaussianPrimitive], targets: &[GaussianPrimitive]) -> Result<DMatrix<f64>> {
    if targets.is_empty() {
        return Err(Error::invalid("cost matrix needs at least one target"));
    }
    let emb = |g: &GaussianPrimitive| -> Result<Embedding> { Ok(embed(&g.mean, g.sqrt_covariance()?.matrix())) };
    let src: Vec<Embedding> = sources.iter().map(emb).collect::<Result<_>>()?;
    let tgt: Vec<Embedding> = targets.iter().map(emb).collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(src.len(), tgt.len(), |i, j| embedded_cost(&src[i], &tgt[j])))
}

/// Row-wise argmin of the cost, ties to the lowest column.
pub fn e_step(cost: &DMatrix<f64>, weights: &[f64]) -> Result<TransportPlan> {
    if cost.nrows() != weights.len() {
        return Err(Error::invalid(format!(
            "cost has {} rows but {} weights were given",
            cost.nrows(),
            weights.len()
        )));
    }
    if cost.ncols() == 0 {
        return Err(Error::invalid("cost matrix has no targets"));
    }
    let assignment = (0..cost.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..cost.ncols() {
                if cost[(i, j)] < cost[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(TransportPlan {
        assignment,
        mass: weights.to_vec(),
    })
}

/// Moment-matched targets for a plan over `n_targets` targets.
pub fn m_step(
    plan: &TransportPlan,
    sources: &[GaussianPrimitive],
    n_targets: usize,
    opacity: OpacityMerge,
) -> Result<Vec<MergedTarget>> {
    if plan.assignment.len() != sources.len() || plan.mass.len() != sources.len() {
        return Err(Error::invalid("plan does not match the sources"));
    }
    let cloud = cloud_of(sources)?;
    let geo = prepare(&cloud)?;
    let mut members = vec![Vec::new(); n_targets];
    for (i, &j) in plan.assignment.iter().enumerate() {
        members
            .get_mut(j)
            .ok_or_else(|| Error::invalid(format!("target {j} out of range")))?
            .push(i);
    }
    members
        .iter()
        .enumerate()
        .map(|(j, m)| {
            if m.is_empty() {
                Err(Error::invalid(format!("target {j} has no sources")))
            } else {
                merge(&cloud, &geo, m, &plan.mass, opacity)
            }
        })
        .collect()
}

/// Mass-weighted moment matching of `members` (global indices).
fn merge(
    cloud: &GaussianCloud,
    geo: &[SourceGeom],
    members: &[usize],
    weights: &[f64],
    opacity: OpacityMerge,
) -> Result<MergedTarget> {
    let first = members[0];
    if members.len() == 1 {
        return Ok(MergedTarget {
            primitive: cloud.get(first),
            mass: weights[first],
            raw_mean: geo[first].mean,
            raw_cov: geo[first].cov,
        });
    }
    let total: f64 = members.iter().map(|&i| weights[i]).sum();
    let uniform = !(total > 0.0);
    let mass = if uniform { members.len() as f64 } else { total };
    let w = |i: usize| if uniform { 1.0 } else { weights[i] };

    // Second moment about the first member's mean, to limit cancellation.
    let origin = geo[first].mean;
    let mut shift = Vector3::zeros();
    let mut second = Matrix3::zeros();
    let stride = cloud.sh_stride();
    let mut sh = vec![0.0; stride];
    let mut alpha_mean = 0.0;
    let mut transmit = 1.0;
    for &i in members {
        let wi = w(i);
        let d = geo[i].mean - origin;
        shift += wi * d;
        second += wi * (geo[i].cov + d * d.transpose());
        let a = cloud.opacity(i);
        alpha_mean += wi * a;
        transmit *= 1.0 - a;
        for (acc, c) in sh.iter_mut().zip(cloud.sh_of(i)) {
            *acc += wi * c;
        }
    }
    let shift = shift / mass;
    let raw_cov = second / mass - shift * shift.transpose();
    let raw_cov = (raw_cov + raw_cov.transpose()) * 0.5;
    let raw_mean = origin + shift;
    sh.iter_mut().for_each(|c| *c /= mass);

    let alpha = match opacity {
        OpacityMerge::WeightedMean => alpha_mean / mass,
        OpacityMerge::Coverage => 1.0 - transmit,
    }
    .clamp(1e-7, 1.0 - 1e-7);

    let (rotation, scales) = Covariance3::from_matrix(raw_cov)?.rotation_and_scales();
    let q = rotation.quaternion();
    let primitive = GaussianPrimitive {
        mean: raw_mean,
        rotation: [q.w, q.i, q.j, q.k],
        log_scales: scales.map(f64::ln),
        opacity_logit: logit(alpha),
        sh_coeffs: sh,
    };
    Ok(MergedTarget {
        primitive,
        mass: total,
        raw_mean,
        raw_cov,
    })
}

fn target_embedding(t: &MergedTarget) -> Result<Embedding> {
    Ok(embed(&t.primitive.mean, t.primitive.sqrt_covariance()?.matrix()))
}

/// Exact nearest target under the embedded cost, ties to the lowest index.
/// Targets are swept outward along one mean axis; the squared axis gap is a
/// lower bound on the cost, which ends the sweep.
fn assign_nearest(src: &[Embedding], tgt: &[Embedding]) -> (Vec<usize>, Vec<f64>) {
    let spread = |a: usize| {
        let (lo, hi) = tgt
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e[a]), hi.max(e[a])));
        hi - lo
    };
    let axis = (0..3).fold(0, |best, a| if spread(a) > spread(best) { a } else { best });
    let mut order: Vec<usize> = (0..tgt.len()).collect();
    order.sort_unstable_by(|&a, &b| tgt[a][axis].total_cmp(&tgt[b][axis]).then(a.cmp(&b)));
    let keys: Vec<f64> = order.iter().map(|&j| tgt[j][axis]).collect();

    let mut assignment = Vec::with_capacity(src.len());
    let mut costs = Vec::with_capacity(src.len());
    for e in src {
        let x = e[axis];
        let pos = keys.partition_point(|k| *k < x);
        let (mut lo, mut hi) = (pos, pos);
        let mut best = (f64::INFINITY, usize::MAX);
        loop {
            let dlo = if lo > 0 { x - keys[lo - 1] } else { f64::INFINITY };
            let dhi = if hi < keys.len() { keys[hi] - x } else { f64::INFINITY };
            let (gap, slot) = if dlo <= dhi {
                if lo == 0 {
                    break;
                }
                lo -= 1;
                (dlo, lo)
            } else {
                hi += 1;
                (dhi, hi - 1)
            };
            if gap * gap > best.0 {
                break;
            }
            let j = order[slot];
            let c = embedded_cost(e, &tgt[j]);
            if c < best.0 || (c == best.0 && j < best.1) {
                best = (c, j);
            }
        }
        assignment.push(best.1);
        costs.push(best.0);
    }
    (assignment, costs)
}

fn initial_seeds(geo: &[SourceGeom], members: &[usize], weights: &[f64], k: usize, init: TargetInit) -> Vec<usize> {
    let n = members.len();
    let mut seeds: Vec<usize> = match init {
        TargetInit::TopWeight => {
            let mut local: Vec<usize> = (0..n).collect();
            local.sort_by(|&a, &b| weights[members[b]].total_cmp(&weights[members[a]]).then(a.cmp(&b)));
            local.truncate(k);
            local
        }
        TargetInit::FarthestPoint => {
            let w = |a: usize| weights[members[a]];
            let first = (0..n).fold(0, |best, a| if w(a) > w(best) { a } else { best });
            let mut chosen = vec![false; n];
            chosen[first] = true;
            let mut seeds = vec![first];
            let mut nearest: Vec<f64> = (0..n)
                .map(|a| embedded_cost(&geo[members[a]].emb, &geo[members[first]].emb))
                .collect();
            while seeds.len() < k {
                let score = |a: usize| w(a).max(f64::MIN_POSITIVE) * nearest[a];
                let next = (0..n)
                    .filter(|&a| !chosen[a])
                    .fold(None, |best: Option<usize>, a| match best {
                        Some(b) if score(b) >= score(a) => Some(b),
                        _ => Some(a),
                    })
                    .expect("k ≤ n");
                chosen[next] = true;
                seeds.push(next);
                for a in 0..n {
                    nearest[a] = nearest[a].min(embedded_cost(&geo[members[a]].emb, &geo[members[next]].emb));
                }
            }
            seeds
        }
    };
    seeds.sort_unstable();
    seeds
}

/// Moves the costliest sources from shared targets into empty ones.
fn reseed_empty(assignment: &mut [usize], costs: &mut [f64], k: usize) -> usize {
    let mut counts = vec![0usize; k];
    for &j in assignment.iter() {
        counts[j] += 1;
    }
    let mut moved = 0;
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut pick: Option<usize> = None;
        for i in 0..assignment.len() {
            if counts[assignment[i]] > 1 && pick.is_none_or(|p| costs[i] > costs[p]) {
                pick = Some(i);
            }
        }
        let i = pick.expect("k ≤ n leaves a shared target");
        counts[assignment[i]] -= 1;
        assignment[i] = j;
        counts[j] = 1;
        costs[i] = f64::NEG_INFINITY;
        moved += 1;
    }
    moved
}

fn run_block(
    cloud: &GaussianCloud,
    geo: &[SourceGeom],
    members: &[usize],
    weights: &[f64],
    k: usize,
    cfg: &TransportConfig,
) -> Result<BlockResult> {
    let n = members.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("block budget {k} outside [1, {n}]")));
    }
    let mut targets: Vec<MergedTarget> = initial_seeds(geo, members, weights, k, cfg.init)
        .into_iter()
        .map(|s| merge(cloud, geo, &[members[s]], weights, cfg.opacity))
        .collect::<Result<_>>()?;
    let src: Vec<Embedding> = members.iter().map(|&i| geo[i].emb).collect();

    let mut previous: Option<Vec<usize>> = None;
    let (mut iterations, mut converged) = (0, false);
    let (mut estep_secs, mut mstep_secs) = (0.0, 0.0);
    for _ in 0..cfg.em_iters {
        let t0 = Instant::now();
        let tgt: Vec<Embedding> = targets.iter().map(target_embedding).collect::<Result<_>>()?;
        let (mut assignment, mut costs) = assign_nearest(&src, &tgt);
        estep_secs += t0.elapsed().as_secs_f64();

        if cfg.early_stop && previous.as_ref() == Some(&assignment) {
            converged = true;
            break;
        }
        let moved = reseed_empty(&mut assignment, &mut costs, k);
        if moved > 0 {
            log::trace!("re-seeded {moved} empty target(s)");
        }

        let t1 = Instant::now();
        let mut clusters = vec![Vec::new(); k];
        for (local, &j) in assignment.iter().enumerate() {
            clusters[j].push(members[local]);
        }
        targets = clusters
            .iter()
            .map(|m| merge(cloud, geo, m, weights, cfg.opacity))
            .collect::<Result<_>>()?;
        mstep_secs += t1.elapsed().as_secs_f64();
        previous = Some(assignment);
        iterations += 1;
    }
    Ok(BlockResult {
        targets,
        assignment: previous.expect("at least one iteration ran"),
        iterations,
        converged,
        estep_secs,
        mstep_secs,
    })
}

/// Aggregates `sources` into `k` targets with block EM.
pub fn aggregate_block(
    sources: &[GaussianPrimitive],
    weights: &[f64],
    k: usize,
    cfg: &TransportConfig,
) -> Result<BlockResult> {
    cfg.validate()?;
    if weights.len() != sources.len() {
        return Err(Error::invalid("one weight per source is required"));
    }
    let cloud = cloud_of(sources)?;
    let geo = prepare(&cloud)?;
    let members: Vec<usize> = (0..sources.len()).collect();
    run_block(&cloud, &geo, &members, weights, k, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct PhaseTimings {
    pub tree_ms: f64,
    /// Per-source square roots and cost embeddings.
    pub cost_ms: f64,
    pub em_ms: f64,
    pub assemble_ms: f64,
    pub total_ms: f64,
    /// Summed over blocks (CPU time when blocks run in parallel).
    pub estep_cpu_ms: f64,
    pub mstep_cpu_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BlockStats {
    pub n_sources: usize,
    pub n_targets: usize,
    pub weight: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Aggregation {
    pub cloud: GaussianCloud,
    /// Transport mass of every input primitive.
    pub weights: Vec<f64>,
    /// Output index receiving each input primitive.
    pub assignment: Vec<usize>,
    pub raw_means: Vec<Vector3<f64>>,
    pub raw_covs: Vec<Matrix3<f64>>,
    pub blocks: Vec<BlockStats>,
    pub timings: PhaseTimings,
}

/// Partitions the cloud and aggregates every block to
/// `max(1, round(ratio·n_b))` targets; outputs are concatenated in block order.
pub fn aggregate_cloud(cloud: &GaussianCloud, cfg: &TransportConfig) -> Result<Aggregation> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty cloud"));
    }
    let start = Instant::now();
    let weights = if cloud.scores.deficiency.is_some() {
        contribution_weights(cloud, cfg.weight_floor)?
    } else {
        (0..cloud.len()).map(|i| cloud.opacity(i) + cfg.weight_floor).collect()
    };

    let t = Instant::now();
    let partition = build_balanced_kdtree(&cloud.means, &weights, cfg.kd_depth)?;
    let tree_ms = ms(t);

    let t = Instant::now();
    let geo = prepare(cloud)?;
    let cost_ms = ms(t);

    let t = Instant::now();
    let blocks = partition.blocks();
    let results: Vec<BlockResult> = blocks
        .par_iter()
        .map(|members| {
            let k = ((cfg.sample_ratio * members.len() as f64).round() as usize).clamp(1, members.len());
            run_block(cloud, &geo, members, &weights, k, cfg)
        })
        .collect::<Result<_>>()?;
    let em_ms = ms(t);

    let t = Instant::now();
    let total_out: usize = results.iter().map(|r| r.targets.len()).sum();
    let mut out = GaussianCloud::with_capacity(cloud.sh_degree(), total_out)?;
    let mut assignment = vec![0; cloud.len()];
    let mut raw_means = Vec::with_capacity(total_out);
    let mut raw_covs = Vec::with_capacity(total_out);
    let mut stats = Vec::with_capacity(results.len());
    let (mut estep, mut mstep) = (0.0, 0.0);
    for ((members, r), &weight) in blocks.iter().zip(&results).zip(&partition.block_weights) {
        let offset = out.len();
        for (local, &j) in r.assignment.iter().enumerate() {
            assignment[members[local]] = offset + j;
        }
        for target in &r.targets {
            raw_means.push(target.raw_mean);
            raw_covs.push(target.raw_cov);
            out.push(target.primitive.clone())?;
        }
        stats.push(BlockStats {
            n_sources: members.len(),
            n_targets: r.targets.len(),
            weight,
            iterations: r.iterations,
            converged: r.converged,
        });
        estep += r.estep_secs;
        mstep += r.mstep_secs;
    }
    let assemble_ms = ms(t);

    let timings = PhaseTimings {
        tree_ms,
        cost_ms,
        em_ms,
        assemble_ms,
        total_ms: ms(start),
        estep_cpu_ms: estep * 1e3,
        mstep_cpu_ms: mstep * 1e3,
    };
    log::info!(
        "aggregated {} → {} primitives in {} blocks ({:.1} ms)",
        cloud.len(),
        out.len(),
        stats.len(),
        timings.total_ms
    );
    Ok(Aggregation {
        cloud: out,
        weights,
        assignment,
        raw_means,
        raw_covs,
        blocks: stats,
        timings,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
