//! Importance-balanced KD partition of a cloud into blocks of roughly equal
//! contribution weight.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;

/// Mass floor so primitives without deficiency votes still take part.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

/// Nodes at least this large build their children on separate rayon tasks.
const PARALLEL_THRESHOLD: usize = 8192;

/// `W_i = α_i·C_i + ε_w`.
pub fn contribution_weights(cloud: &GaussianCloud, eps_w: f64) -> Result<Vec<f64>> {
    let c = cloud
        .scores
        .deficiency
        .as_ref()
        .ok_or_else(|| Error::invalid("contribution weights need the deficiency channel"))?;
    if c.len() != cloud.len() {
        return Err(Error::invalid("deficiency channel length mismatch"));
    }
    Ok(c.iter()
        .enumerate()
        .map(|(i, &ci)| cloud.opacity(i) * ci as f64 + eps_w)
        .collect())
}

/// One internal split, recorded for diagnostics and balance checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRecord {
    pub level: usize,
    pub axis: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub weight_left: f64,
    pub weight_right: f64,
    /// Largest single weight in the node.
    pub max_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub block_of: Vec<usize>,
    pub depth: usize,
    pub block_weights: Vec<f64>,
    pub splits: Vec<SplitRecord>,
}

impl Partition {
    pub fn n_blocks(&self) -> usize {
        self.block_weights.len()
    }

    /// Members of every block, ascending index within each block.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_blocks()];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b].push(i);
        }
        out
    }
}

struct Built {
    leaves: Vec<Vec<usize>>,
    splits: Vec<SplitRecord>,
}

/// Recursively halves the cumulative weight along the widest axis, `depth`
/// times or until nodes are singletons.
pub fn build_balanced_kdtree(positions: &[Vector3<f64>], weights: &[f64], depth: usize) -> Result<Partition> {
    if positions.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} positions but {} weights",
            positions.len(),
            weights.len()
        )));
    }
    if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("non-finite position"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let mut recs: Vec<Rec> = positions
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (p, &w))| Rec { p: [p.x, p.y, p.z], w, i })
        .collect();
    let built = if recs.is_empty() {
        Built {
            leaves: Vec::new(),
            splits: Vec::new(),
        }
    } else {
        build_node(&mut recs, 0, depth)
    };

    let mut block_of = vec![0; positions.len()];
    let mut block_weights = Vec::with_capacity(built.leaves.len());
    for (b, leaf) in built.leaves.iter().enumerate() {
        let mut total = 0.0;
        for &i in leaf {
            block_of[i] = b;
            total += weights[i];
        }
        block_weights.push(total);
    }
    Ok(Partition {
        block_of,
        depth,
        block_weights,
        splits: built.splits,
    })
}

/// Point record sorted in place, so a node is one contiguous slice.
#[derive(Clone, Copy)]
struct Rec {
    p: [f64; 3],
    w: f64,
    i: usize,
}

fn widest_axis(recs: &[Rec]) -> usize {
    let mut lo = recs[0].p;
    let mut hi = recs[0].p;
    for r in recs {
        for a in 0..3 {
            lo[a] = lo[a].min(r.p[a]);
            hi[a] = hi[a].max(r.p[a]);
        }
    }
    // Ties resolve to the lowest axis.
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }
    axis
}

/// Number of points that go left. Takes the smallest prefix reaching half the
/// total, or one fewer if that is strictly closer to balance, kept within
/// `[1, n−1]`.
fn split_point(sorted_weights: impl Iterator<Item = f64>, n: usize, total: f64) -> usize {
    if !(total > 0.0) {
        return n / 2;
    }
    let half = 0.5 * total;
    let mut cum = 0.0;
    let mut prev = 0.0;
    let mut p = n;
    for (k, w) in sorted_weights.enumerate() {
        prev = cum;
        cum += w;
        if cum >= half {
            p = k + 1;
            break;
        }
    }
    if p >= n {
        return n - 1;
    }
    if p > 1 && (total - 2.0 * prev).abs() < (2.0 * cum - total).abs() {
        p - 1
    } else {
        p
    }
}

fn build_node(recs: &mut [Rec], level: usize, depth: usize) -> Built {
    let n = recs.len();
    if level >= depth || n <= 1 {
        return Built {
            leaves: vec![recs.iter().map(|r| r.i).collect()],
            splits: Vec::new(),
        };
    }
    let axis = widest_axis(recs);
    recs.sort_unstable_by(|a, b| a.p[axis].total_cmp(&b.p[axis]).then(a.i.cmp(&b.i)));

    let total: f64 = recs.iter().map(|r| r.w).sum();
    let p = split_point(recs.iter().map(|r| r.w), n, total);
    let (left, right) = recs.split_at_mut(p);
    let record = SplitRecord {
        level,
        axis,
        n_left: left.len(),
        n_right: right.len(),
        weight_left: left.iter().map(|r| r.w).sum(),
        weight_right: right.iter().map(|r| r.w).sum(),
        max_weight: left.iter().chain(right.iter()).map(|r| r.w).fold(0.0, f64::max),
    };

    let (mut l, r) = if n >= PARALLEL_THRESHOLD {
        rayon::join(|| build_node(left, level + 1, depth), || build_node(right, level + 1, depth))
    } else {
        (build_node(left, level + 1, depth), build_node(right, level + 1, depth))
    };
    l.leaves.extend(r.leaves);
    let mut splits = Vec::with_capacity(1 + l.splits.len() + r.splits.len());
    splits.push(record);
    splits.append(&mut l.splits);
    splits.extend(r.splits);
    Built {
        leaves: l.leaves,
        splits,
    }
}
