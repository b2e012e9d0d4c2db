//! Scaling harness for tree construction and block aggregation.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{synth_scene, SynthParams};
use crate::partition::build_balanced_kdtree;
use crate::transport::{aggregate_cloud, TransportConfig};

pub const MIN_BENCH_N: usize = 10_000;
pub const MIN_REPEATS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchGrid {
    pub ns: Vec<usize>,
    pub depths: Vec<usize>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub n: usize,
    pub depth: usize,
    pub ratio: f64,
    pub tree_ms: f64,
    pub cost_ms: f64,
    pub em_ms: f64,
    pub total_ms: f64,
    pub output_count: usize,
}

/// `time(2N) / time(N)` at fixed depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Growth {
    pub depth: usize,
    pub n_from: usize,
    pub n_to: usize,
    pub tree_ratio: f64,
    pub total_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub repeats: usize,
    pub threads: usize,
    pub cells: Vec<BenchCell>,
    pub growth: Vec<Growth>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Median wall-clock timings over `repeats` runs (after one discarded warm-up)
/// for every `(N, D)` cell. `threads = 0` uses rayon's default.
pub fn bench_aggregation(grid: &BenchGrid, seed: u64, repeats: usize, threads: usize) -> Result<BenchReport> {
    if grid.ns.is_empty() || grid.depths.is_empty() {
        return Err(Error::invalid("bench grid is empty"));
    }
    if let Some(n) = grid.ns.iter().find(|&&n| n < MIN_BENCH_N) {
        return Err(Error::invalid(format!("bench sizes must be at least {MIN_BENCH_N}, got {n}")));
    }
    if repeats < MIN_REPEATS {
        return Err(Error::invalid(format!("at least {MIN_REPEATS} repeats are required")));
    }
    let pool = pool(threads)?;
    let used_threads = pool.current_num_threads();
    let cells = pool.install(|| -> Result<Vec<BenchCell>> {
        let mut cells = Vec::new();
        for &n in &grid.ns {
            let (cloud, _) = synth_scene(&SynthParams::new(seed, n, 1, 0))?;
            for &depth in &grid.depths {
                let cfg = TransportConfig {
                    sample_ratio: grid.ratio,
                    kd_depth: depth,
                    ..Default::default()
                };
                let warm = aggregate_cloud(&cloud, &cfg)?;
                let output_count = warm.cloud.len();
                let mut runs: [Vec<f64>; 4] = Default::default();
                for _ in 0..repeats {
                    let agg = aggregate_cloud(&cloud, &cfg)?;
                    if agg.cloud.len() != output_count {
                        return Err(Error::invalid("aggregation output size changed between repeats"));
                    }
                    let t = agg.timings;
                    for (slot, v) in runs.iter_mut().zip([t.tree_ms, t.cost_ms, t.em_ms, t.total_ms]) {
                        slot.push(v);
                    }
                }
                let [tree, cost, em, total] = runs.map(|mut v| median(&mut v));
                log::info!("bench N={n} D={depth}: total {total:.1} ms, {output_count} outputs");
                cells.push(BenchCell {
                    n,
                    depth,
                    ratio: grid.ratio,
                    tree_ms: tree,
                    cost_ms: cost,
                    em_ms: em,
                    total_ms: total,
                    output_count,
                });
            }
        }
        Ok(cells)
    })?;

    let mut growth = Vec::new();
    for a in &cells {
        if let Some(b) = cells.iter().find(|b| b.depth == a.depth && b.n == 2 * a.n) {
            growth.push(Growth {
                depth: a.depth,
                n_from: a.n,
                n_to: b.n,
                tree_ratio: b.tree_ms / a.tree_ms,
                total_ratio: b.total_ms / a.total_ms,
            });
        }
    }
    Ok(BenchReport {
        seed,
        repeats,
        threads: used_threads,
        cells,
        growth,
    })
}

/// Median KD-tree build time in milliseconds for each `N`, with random
/// positions and weights. Sizes are interleaved within each round so that
/// machine-wide slowdowns hit all of them alike.
pub fn bench_tree_build(ns: &[usize], depth: usize, seed: u64, repeats: usize, threads: usize) -> Result<Vec<(usize, f64)>> {
    use rand::{Rng, SeedableRng};
    let pool = pool(threads)?;
    let inputs: Vec<_> = ns
        .iter()
        .map(|&n| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ n as u64);
            let pos: Vec<_> = (0..n)
                .map(|_| nalgebra::Vector3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            (pos, w)
        })
        .collect();
    let mut times = vec![Vec::with_capacity(repeats); ns.len()];
    pool.install(|| -> Result<()> {
        for (pos, w) in &inputs {
            build_balanced_kdtree(pos, w, depth)?;
        }
        for _ in 0..repeats.max(1) {
            for ((pos, w), t) in inputs.iter().zip(times.iter_mut()) {
                let start = Instant::now();
                build_balanced_kdtree(pos, w, depth)?;
                t.push(start.elapsed().as_secs_f64() * 1e3);
            }
        }
        Ok(())
    })?;
    Ok(ns.iter().zip(times.iter_mut()).map(|(&n, t)| (n, median(t))).collect())
}
