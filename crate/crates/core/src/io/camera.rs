//! Pinhole cameras and their JSON interchange file.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-4;

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Rotation block of `world_to_camera`.
    pub rotation: Matrix3<f64>,
    /// Translation column of `world_to_camera`.
    pub translation: Vector3<f64>,
}

/// On-disk record: `world_to_camera` is 16 numbers, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: [f64; 16],
}

impl Camera {
    pub fn from_record(rec: &CameraRecord, index: usize) -> Result<Self> {
        let fail = |message: String| Error::CameraValidation { index, message };
        let m = Matrix4::from_row_slice(&rec.world_to_camera);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite world_to_camera entry".into()));
        }
        if !(rec.fx > 0.0 && rec.fy > 0.0) {
            return Err(fail(format!("focal lengths must be positive ({}, {})", rec.fx, rec.fy)));
        }
        if rec.width == 0 || rec.height == 0 {
            return Err(fail("width and height must be positive".into()));
        }
        let last = m.row(3);
        if (last[0], last[1], last[2], last[3]) != (0.0, 0.0, 0.0, 1.0) {
            return Err(fail("last row of world_to_camera must be (0,0,0,1)".into()));
        }
        let rotation: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if err > ORTHONORMAL_TOLERANCE {
            return Err(fail(format!("rotation is not orthonormal (|RᵀR − I| = {err:.3e})")));
        }
        if rotation.determinant() <= 0.0 {
            return Err(fail("rotation has negative determinant".into()));
        }
        Ok(Camera {
            fx: rec.fx,
            fy: rec.fy,
            cx: rec.cx,
            cy: rec.cy,
            width: rec.width,
            height: rec.height,
            rotation,
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        })
    }

    pub fn to_record(&self) -> CameraRecord {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        let mut world_to_camera = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                world_to_camera[r * 4 + c] = m[(r, c)];
            }
        }
        CameraRecord {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            world_to_camera,
        }
    }

    /// Camera looking from `eye` at `target`; world `up` fixes the roll.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        width: u32,
        height: u32,
        focal: f64,
    ) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Camera {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation: -(rotation * eye),
        }
    }

    pub fn to_camera_space(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Rescales intrinsics to a new resolution.
    pub fn with_resolution(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }
}

pub fn parse_cameras(text: &str, path: &Path) -> Result<Vec<Camera>> {
    let records: Vec<CameraRecord> =
        serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| Camera::from_record(r, i))
        .collect()
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text, path)
}

pub fn write_cameras(cameras: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<CameraRecord> = cameras.iter().map(Camera::to_record).collect();
    let text = serde_json::to_string_pretty(&records).expect("camera records serialise");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
