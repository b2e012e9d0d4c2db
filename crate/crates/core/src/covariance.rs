//! Symmetric positive-definite 3×3 covariance algebra.
//!
//! Every covariance in the crate is derived from a rotation and per-axis
//! scales (`R·diag(s²)·Rᵀ`) or produced by moment matching. Both paths go
//! through [`Covariance3`], which guarantees symmetry and clamps the spectrum
//! to a relative floor so that flat or needle-like splats stay invertible.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Relative eigenvalue floor, as a fraction of the largest eigenvalue.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-12;
/// Absolute eigenvalue floor used when the largest eigenvalue is itself tiny.
pub const SPD_ABSOLUTE_FLOOR: f64 = 1e-20;

const SYMMETRY_TOLERANCE: f64 = 1e-9;
const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 32;

/// Smallest eigenvalue admitted for a spectrum whose largest eigenvalue is `largest`.
pub fn spd_floor(largest: f64) -> f64 {
    (SPD_RELATIVE_FLOOR * largest).max(SPD_ABSOLUTE_FLOOR)
}

/// Eigen-decomposition of a symmetric 3×3 matrix.
///
/// `values` are sorted descending. Column `i` of `vectors` is the unit
/// eigenvector of `values[i]`, signed so that its largest-magnitude component
/// is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen {
    pub values: Vector3<f64>,
    pub vectors: Matrix3<f64>,
}

impl SymEigen {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        self.vectors * Matrix3::from_diagonal(&self.values) * self.vectors.transpose()
    }

    /// Rotation (determinant +1) with the same column axes; a reflected frame
    /// gets its last column negated.
    pub fn proper_rotation(&self) -> Matrix3<f64> {
        let mut r = self.vectors;
        if r.determinant() < 0.0 {
            let flipped = -r.column(2);
            r.set_column(2, &flipped);
        }
        r
    }
}

/// Symmetric positive-definite 3×3 matrix, world units².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3(Matrix3<f64>);

impl Covariance3 {
    /// Validates symmetry and clamps eigenvalues to the SPD floor.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        Self::from_matrix_counting(m).map(|(c, _)| c)
    }

    /// Like [`Covariance3::from_matrix`], also returning how many eigenvalues
    /// had to be clamped.
    pub fn from_matrix_counting(m: Matrix3<f64>) -> Result<(Self, usize)> {
        let eig = eigendecompose_sym3(&m)?;
        let floor = spd_floor(eig.values[0].max(0.0));
        let clamped = eig.values.iter().filter(|&&v| v < floor).count();
        if clamped == 0 {
            return Ok((Covariance3(symmetrize(&m)), 0));
        }
        log::debug!("covariance spectrum {:?} clamped to floor {floor:e}", eig.values);
        let values = eig.values.map(|v| v.max(floor));
        let rebuilt = eig.vectors * Matrix3::from_diagonal(&values) * eig.vectors.transpose();
        Ok((Covariance3(symmetrize(&rebuilt)), clamped))
    }

    /// Wraps a matrix that is symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(m: Matrix3<f64>) -> Self {
        Covariance3(m)
    }

    pub fn identity() -> Self {
        Covariance3(Matrix3::identity())
    }

    pub fn diagonal(d: Vector3<f64>) -> Result<Self> {
        Self::from_matrix(Matrix3::from_diagonal(&d))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigen(&self) -> SymEigen {
        jacobi_sym3(&self.0)
    }

    /// Splits into a proper rotation and per-axis standard deviations, sorted
    /// descending.
    pub fn rotation_and_scales(&self) -> (UnitQuaternion<f64>, Vector3<f64>) {
        let eig = self.eigen();
        let floor = spd_floor(eig.values[0].max(0.0));
        let scales = eig.values.map(|v| v.max(floor).sqrt());
        let rotation = nalgebra::Rotation3::from_matrix_unchecked(eig.proper_rotation());
        (UnitQuaternion::from_rotation_matrix(&rotation), scales)
    }
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Rotation matrix of a (not necessarily normalized) quaternion stored as
/// `[w, x, y, z]`.
pub fn rotation_matrix(q: [f64; 4]) -> Result<Matrix3<f64>> {
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite quaternion {q:?}")));
    }
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    if quat.norm() == 0.0 {
        return Err(Error::invalid("zero quaternion"));
    }
    Ok(UnitQuaternion::from_quaternion(quat).to_rotation_matrix().into_inner())
}

/// `R·diag(scales²)·Rᵀ` for rotation quaternion `[w, x, y, z]`.
pub fn build_covariance(rotation: [f64; 4], scales: Vector3<f64>) -> Result<Covariance3> {
    if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::invalid(format!(
            "scales must be finite and positive, got {scales:?}"
        )));
    }
    let r = rotation_matrix(rotation)?;
    Ok(covariance_from_frame(&r, &scales))
}

/// Covariance from an orthonormal frame and positive scales, with the
/// smallest variances lifted to the SPD floor if needed.
pub(crate) fn covariance_from_frame(r: &Matrix3<f64>, scales: &Vector3<f64>) -> Covariance3 {
    let mut var = scales.component_mul(scales);
    let floor = spd_floor(var.max());
    var.apply(|v| *v = v.max(floor));
    let m = r * Matrix3::from_diagonal(&var) * r.transpose();
    Covariance3::from_symmetric_unchecked(symmetrize(&m))
}

/// Eigen-decomposition by cyclic Jacobi rotations.
///
/// Fails if the input is asymmetric beyond a small tolerance or non-finite.
pub fn eigendecompose_sym3(m: &Matrix3<f64>) -> Result<SymEigen> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite matrix entry"));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(jacobi_sym3(&symmetrize(m)))
}

fn jacobi_sym3(m: &Matrix3<f64>) -> SymEigen {
    let mut a = *m;
    let mut v = Matrix3::<f64>::identity();
    let norm = a.norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2)).sqrt();
        if off <= JACOBI_TOLERANCE * norm || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;

            let mut j = Matrix3::<f64>::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;

            a = j.transpose() * a * j;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= j;
        }
    }

    let diag = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
    let mut order = [0usize, 1, 2];
    // Stable sort keeps the lower index first among equal eigenvalues.
    order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]));

    let mut values = Vector3::zeros();
    let mut vectors = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = diag[src];
        let mut col = v.column(src).into_owned();
        let lead = (0..3)
            .fold(0usize, |best, i| if col[i].abs() > col[best].abs() { i } else { best });
        if col[lead] < 0.0 {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    SymEigen { values, vectors }
}

/// `R·diag(√λ)·Rᵀ`.
pub fn sqrt_covariance(cov: &Covariance3) -> Covariance3 {
    let eig = cov.eigen();
    let floor = spd_floor(eig.values[0].max(0.0));
    let clamped = eig.values.iter().filter(|&&v| v < floor).count();
    if clamped > 0 {
        log::debug!("sqrt_covariance: {clamped} eigenvalue(s) clamped to {floor:e}");
    }
    let roots = eig.values.map(|v| v.max(floor).sqrt());
    let m = eig.vectors * Matrix3::from_diagonal(&roots) * eig.vectors.transpose();
    Covariance3::from_symmetric_unchecked(symmetrize(&m))
}

/// Largest standard deviation and its axis.
pub fn principal_axis(cov: &Covariance3) -> (f64, Vector3<f64>) {
    let eig = cov.eigen();
    let axis = eig.vectors.column(0).into_owned();
    (eig.values[0].max(0.0).sqrt(), axis)
}
