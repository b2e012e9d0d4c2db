//! Splat primitives and the column-oriented cloud that holds them.

use nalgebra::{Matrix3, Vector3};

use crate::covariance::{build_covariance, covariance_from_frame, rotation_matrix, Covariance3};
use crate::error::{Error, Result};

/// Zeroth-order real spherical-harmonic constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: u8 = 3;

/// Number of SH basis functions per colour channel.
pub fn sh_basis_count(degree: u8) -> usize {
    let d = degree as usize + 1;
    d * d
}

/// Total SH coefficients per primitive (three channels).
pub fn sh_coeff_count(degree: u8) -> usize {
    3 * sh_basis_count(degree)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One splat, in 3DGS storage conventions.
///
/// `sh_coeffs` follows the PLY layout: the three DC terms (R, G, B) first,
/// then the higher-order terms channel-major (all R terms, all G, all B).
/// `rotation` is `[w, x, y, z]` and is normalised wherever it is consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vector3<f64>,
    pub rotation: [f64; 4],
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    pub sh_coeffs: Vec<f64>,
}

impl GaussianPrimitive {
    /// Builds a primitive with a normalised rotation.
    pub fn new(
        mean: Vector3<f64>,
        rotation: [f64; 4],
        log_scales: Vector3<f64>,
        opacity_logit: f64,
        sh_coeffs: Vec<f64>,
    ) -> Result<Self> {
        let norm = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid(format!("invalid rotation {rotation:?}")));
        }
        let g = GaussianPrimitive {
            mean,
            rotation: rotation.map(|v| v / norm),
            log_scales,
            opacity_logit,
            sh_coeffs,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite mean"));
        }
        let norm2: f64 = self.rotation.iter().map(|v| v * v).sum();
        if !norm2.is_finite() || norm2 == 0.0 {
            return Err(Error::invalid("zero or non-finite rotation"));
        }
        if self.scales().iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::invalid("scales must be finite and positive"));
        }
        let alpha = self.opacity();
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!(
                "opacity logit {} leaves (0,1)",
                self.opacity_logit
            )));
        }
        if self.sh_coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite SH coefficient"));
        }
        Ok(())
    }

    pub fn scales(&self) -> Vector3<f64> {
        self.log_scales.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn rotation_matrix(&self) -> Result<Matrix3<f64>> {
        rotation_matrix(self.rotation)
    }

    pub fn covariance(&self) -> Result<Covariance3> {
        build_covariance(self.rotation, self.scales())
    }

    /// `Σ^{1/2} = R·diag(s)·Rᵀ`, read straight off the stored frame.
    pub fn sqrt_covariance(&self) -> Result<Covariance3> {
        let r = self.rotation_matrix()?;
        let s = self.scales();
        let m = r * Matrix3::from_diagonal(&s) * r.transpose();
        Ok(Covariance3::from_symmetric_unchecked((m + m.transpose()) * 0.5))
    }

    pub fn sh_degree(&self) -> Result<u8> {
        sh_degree_for_len(self.sh_coeffs.len())
    }

    /// View-dependent RGB for a unit viewing direction (camera → splat).
    pub fn color(&self, dir: &Vector3<f64>) -> Result<[f64; 3]> {
        Ok(eval_sh(self.sh_degree()?, &self.sh_coeffs, dir))
    }
}

pub(crate) fn sh_degree_for_len(len: usize) -> Result<u8> {
    (0..=MAX_SH_DEGREE)
        .find(|&d| sh_coeff_count(d) == len)
        .ok_or_else(|| Error::invalid(format!("{len} SH coefficients do not match any degree")))
}

/// Evaluates SH colour (offset by 0.5, clamped below at 0) in PLY layout.
pub fn eval_sh(degree: u8, coeffs: &[f64], dir: &Vector3<f64>) -> [f64; 3] {
    let k = sh_basis_count(degree);
    let mut basis = [0.0f64; 16];
    basis[0] = SH_C0;
    if degree >= 1 {
        let (x, y, z) = (dir.x, dir.y, dir.z);
        basis[1] = -SH_C1 * y;
        basis[2] = SH_C1 * z;
        basis[3] = -SH_C1 * x;
        if degree >= 2 {
            let (xx, yy, zz) = (x * x, y * y, z * z);
            basis[4] = SH_C2[0] * x * y;
            basis[5] = SH_C2[1] * y * z;
            basis[6] = SH_C2[2] * (2.0 * zz - xx - yy);
            basis[7] = SH_C2[3] * x * z;
            basis[8] = SH_C2[4] * (xx - yy);
            if degree >= 3 {
                basis[9] = SH_C3[0] * y * (3.0 * xx - yy);
                basis[10] = SH_C3[1] * x * y * z;
                basis[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
                basis[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
                basis[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
                basis[14] = SH_C3[5] * z * (xx - yy);
                basis[15] = SH_C3[6] * x * (xx - 3.0 * yy);
            }
        }
    }
    let rest = &coeffs[3..];
    let mut rgb = [0.0; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        let mut acc = basis[0] * coeffs[c];
        for j in 1..k {
            acc += basis[j] * rest[c * (k - 1) + j - 1];
        }
        *out = (acc + 0.5).max(0.0);
    }
    rgb
}

/// Optional per-primitive score channels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreChannels {
    /// Geometric deficiency count `C`.
    pub deficiency: Option<Vec<u64>>,
    /// Densification score `S_d`.
    pub densify: Option<Vec<u64>>,
    /// Pruning score `S_p` in `[0, 1]`.
    pub prune: Option<Vec<f64>>,
    /// Transport mass `W`.
    pub weight: Option<Vec<f64>>,
}

impl ScoreChannels {
    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        let lens = [
            ("deficiency", self.deficiency.as_ref().map(Vec::len)),
            ("densify", self.densify.as_ref().map(Vec::len)),
            ("prune", self.prune.as_ref().map(Vec::len)),
            ("weight", self.weight.as_ref().map(Vec::len)),
        ];
        for (name, len) in lens {
            if let Some(len) = len {
                if len != n {
                    return Err(Error::invalid(format!(
                        "{name} channel has {len} entries for {n} primitives"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Keeps the entries whose index is flagged in `keep`.
    pub fn retain(&mut self, keep: &[bool]) {
        fn filter<T: Copy>(v: &mut Option<Vec<T>>, keep: &[bool]) {
            if let Some(v) = v {
                let mut i = 0;
                v.retain(|_| {
                    i += 1;
                    keep[i - 1]
                });
            }
        }
        filter(&mut self.deficiency, keep);
        filter(&mut self.densify, keep);
        filter(&mut self.prune, keep);
        filter(&mut self.weight, keep);
    }
}

/// Column-oriented splat collection. All primitives share one SH degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    sh_degree: u8,
    pub means: Vec<Vector3<f64>>,
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<Vector3<f64>>,
    pub opacity_logits: Vec<f64>,
    /// `len() * sh_coeff_count(sh_degree)` values, PLY layout per primitive.
    pub sh: Vec<f64>,
    pub scores: ScoreChannels,
}

impl GaussianCloud {
    pub fn new(sh_degree: u8) -> Result<Self> {
        Self::with_capacity(sh_degree, 0)
    }

    pub fn with_capacity(sh_degree: u8, n: usize) -> Result<Self> {
        if sh_degree > MAX_SH_DEGREE {
            return Err(Error::invalid(format!("SH degree {sh_degree} > {MAX_SH_DEGREE}")));
        }
        Ok(GaussianCloud {
            sh_degree,
            means: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            opacity_logits: Vec::with_capacity(n),
            sh: Vec::with_capacity(n * sh_coeff_count(sh_degree)),
            scores: ScoreChannels::default(),
        })
    }

    pub fn from_primitives(sh_degree: u8, prims: impl IntoIterator<Item = GaussianPrimitive>) -> Result<Self> {
        let mut cloud = Self::new(sh_degree)?;
        for g in prims {
            cloud.push(g)?;
        }
        Ok(cloud)
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub fn sh_stride(&self) -> usize {
        sh_coeff_count(self.sh_degree)
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Appends a primitive. Score channels are dropped since they no longer
    /// cover every primitive.
    pub fn push(&mut self, g: GaussianPrimitive) -> Result<()> {
        if g.sh_coeffs.len() != self.sh_stride() {
            return Err(Error::invalid(format!(
                "primitive has {} SH coefficients, cloud expects {}",
                g.sh_coeffs.len(),
                self.sh_stride()
            )));
        }
        self.means.push(g.mean);
        self.rotations.push(g.rotation);
        self.log_scales.push(g.log_scales);
        self.opacity_logits.push(g.opacity_logit);
        self.sh.extend_from_slice(&g.sh_coeffs);
        self.scores = ScoreChannels::default();
        Ok(())
    }

    pub fn get(&self, i: usize) -> GaussianPrimitive {
        GaussianPrimitive {
            mean: self.means[i],
            rotation: self.rotations[i],
            log_scales: self.log_scales[i],
            opacity_logit: self.opacity_logits[i],
            sh_coeffs: self.sh_of(i).to_vec(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = GaussianPrimitive> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn sh_of(&self, i: usize) -> &[f64] {
        let s = self.sh_stride();
        &self.sh[i * s..(i + 1) * s]
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn scales(&self, i: usize) -> Vector3<f64> {
        self.log_scales[i].map(f64::exp)
    }

    /// Covariance of primitive `i`; rotation is normalised on the fly.
    pub fn covariance(&self, i: usize) -> Result<Covariance3> {
        let r = rotation_matrix(self.rotations[i])?;
        Ok(covariance_from_frame(&r, &self.scales(i)))
    }

    /// New cloud holding the primitives flagged in `keep`, with channels filtered alike.
    pub fn select(&self, keep: &[bool]) -> GaussianCloud {
        assert_eq!(keep.len(), self.len());
        let s = self.sh_stride();
        let mut out = GaussianCloud::with_capacity(self.sh_degree, keep.iter().filter(|k| **k).count())
            .expect("degree already validated");
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.means.push(self.means[i]);
            out.rotations.push(self.rotations[i]);
            out.log_scales.push(self.log_scales[i]);
            out.opacity_logits.push(self.opacity_logits[i]);
            out.sh.extend_from_slice(&self.sh[i * s..(i + 1) * s]);
        }
        out.scores = self.scores.clone();
        out.scores.retain(keep);
        out
    }

    /// Checks column lengths, score channel lengths and per-primitive invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.opacity_logits.len() != n
            || self.sh.len() != n * self.sh_stride()
        {
            return Err(Error::invalid("cloud columns have inconsistent lengths"));
        }
        self.scores.check_len(n)?;
        for i in 0..n {
            self.get(i)
                .validate()
                .map_err(|e| Error::invalid(format!("primitive {i}: {e}")))?;
        }
        Ok(())
    }

    /// Axis-aligned bounds of the means.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.means.first()?;
        Some(self.means.iter().fold((first, first), |(lo, hi), m| (lo.inf(m), hi.sup(m))))
    }
}
