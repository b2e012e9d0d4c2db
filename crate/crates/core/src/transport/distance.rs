//! Distances between Gaussians.

use nalgebra::{Matrix3, Vector3};

use crate::covariance::{eigendecompose_sym3, SymEigen};
use crate::error::{Error, Result};

fn spd_eigen(cov: &Matrix3<f64>, which: &str) -> Result<SymEigen> {
    let eig = eigendecompose_sym3(cov)?;
    if !(eig.values[2] > 0.0) {
        return Err(Error::invalid(format!(
            "{which} covariance is not positive definite (eigenvalues {:?})",
            eig.values.as_slice()
        )));
    }
    Ok(eig)
}

fn sqrt_from(eig: &SymEigen) -> Matrix3<f64> {
    let roots = eig.values.map(|v| v.max(0.0).sqrt());
    let m = eig.vectors * Matrix3::from_diagonal(&roots) * eig.vectors.transpose();
    (m + m.transpose()) * 0.5
}

/// Squared 2-Wasserstein distance between `N(μa, Σa)` and `N(μb, Σb)`,
/// clamped at zero.
pub fn bures_wasserstein_sq(
    mean_a: &Vector3<f64>,
    cov_a: &Matrix3<f64>,
    mean_b: &Vector3<f64>,
    cov_b: &Matrix3<f64>,
) -> Result<f64> {
    let root_a = sqrt_from(&spd_eigen(cov_a, "first")?);
    spd_eigen(cov_b, "second")?;
    let m = root_a * cov_b * root_a;
    let inner = eigendecompose_sym3(&((m + m.transpose()) * 0.5))?;
    let trace_root: f64 = inner.values.iter().map(|v| v.max(0.0).sqrt()).sum();
    let d = (mean_a - mean_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * trace_root;
    Ok(d.max(0.0))
}

/// `‖μa − μb‖² + ‖Σa^{1/2} − Σb^{1/2}‖_F²`; never below the Bures-Wasserstein value.
pub fn gelbrich_sq(
    mean_a: &Vector3<f64>,
    cov_a: &Matrix3<f64>,
    mean_b: &Vector3<f64>,
    cov_b: &Matrix3<f64>,
) -> Result<f64> {
    let root_a = sqrt_from(&spd_eigen(cov_a, "first")?);
    let root_b = sqrt_from(&spd_eigen(cov_b, "second")?);
    Ok((mean_a - mean_b).norm_squared() + (root_a - root_b).norm_squared())
}

/// Mean and the six unique entries of `Σ^{1/2}`, laid out so the Gelbrich
/// cost is a weighted squared Euclidean distance.
pub(crate) type Embedding = [f64; 9];

pub(crate) fn embed(mean: &Vector3<f64>, root: &Matrix3<f64>) -> Embedding {
    [
        mean.x,
        mean.y,
        mean.z,
        root[(0, 0)],
        root[(1, 1)],
        root[(2, 2)],
        root[(0, 1)],
        root[(0, 2)],
        root[(1, 2)],
    ]
}

/// Off-diagonal entries appear twice in the Frobenius norm.
#[inline]
pub(crate) fn embedded_cost(a: &Embedding, b: &Embedding) -> f64 {
    let mut diag = 0.0;
    for k in 0..6 {
        let d = a[k] - b[k];
        diag += d * d;
    }
    let mut off = 0.0;
    for k in 6..9 {
        let d = a[k] - b[k];
        off += d * d;
    }
    diag + 2.0 * off
}
