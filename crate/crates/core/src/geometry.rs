//! Basic geometric value types shared by every stage.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in meters.
pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `‖RᵀR − I‖∞` and `|det R − 1|` for a rotation to be accepted.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Rigid camera-to-world transform: `p_world = R · p_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose translation is not finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// Builds the pose from a row-major rotation and a translation.
    pub fn from_arrays(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(
            Mat3::from_row_slice(rotation),
            Vec3::new(translation[0], translation[1], translation[2]),
        )
    }

    /// Camera looking from `eye` towards `target`, using the optical convention
    /// (x right, y down, z forward). `up` is the world up direction.
    pub fn look_at(eye: Point3, target: Point3, up: Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 || !forward.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("camera direction has zero length"));
        }
        let z = forward.normalize();
        let mut x = z.cross(&up);
        if x.norm() < 1e-9 {
            // Looking along `up`: any perpendicular will do.
            let alt = if z.x.abs() < 0.9 {
                Vec3::x()
            } else {
                Vec3::y()
            };
            x = z.cross(&alt);
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_columns(&[x, y, z]);
        Self::new(rotation, eye.coords)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    /// Same rotation with the translation multiplied by `k`.
    pub fn with_scaled_translation(&self, k: f64) -> Self {
        Self {
            rotation: self.rotation,
            translation: self.translation * k,
        }
    }

    /// World-to-camera transform.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Maps a world point into this camera's frame without materializing the inverse.
    #[inline]
    pub fn apply_inverse(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.tr_mul(&(p.coords - self.translation)))
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

fn check_rotation(r: &Mat3) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rotation has non-finite entries"));
    }
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    if err > ROTATION_TOLERANCE {
        return Err(Error::invalid(format!(
            "rotation is not orthonormal (|RtR - I| = {err:.3e})"
        )));
    }
    if (r.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::invalid("rotation determinant is not +1"));
    }
    Ok(())
}

/// Pinhole intrinsics, zero skew, no distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        Ok(())
    }

    /// Pixel index containing continuous image coordinates, if inside the image.
    /// Pixel `(i, j)` is centered on the integer coordinate `(i, j)`.
    #[inline]
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(u32, u32)> {
        let i = (u + 0.5).floor();
        let j = (v + 0.5).floor();
        if i >= 0.0 && j >= 0.0 && i < self.width as f64 && j < self.height as f64 {
            Some((i as u32, j as u32))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox2D {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl BoundingBox2D {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let b = Self {
            xmin,
            ymin,
            xmax,
            ymax,
            label: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.xmin, self.ymin, self.xmax, self.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.xmin > self.xmax || self.ymin > self.ymax {
            return Err(Error::invalid(format!(
                "malformed box ({}, {}, {}, {})",
                self.xmin, self.ymin, self.xmax, self.ymax
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn intersection_area(&self, other: &BoundingBox2D) -> f64 {
        let w = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let h = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}
