//! Pinhole projection and depth back-projection.

use crate::cloud::PointCloud;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Point3, Pose};

/// Image coordinates and camera-frame depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects a world point into the camera whose camera-to-world pose is `pose`.
///
/// Returns `None` for points at or behind the image plane. No bounds check.
#[inline]
pub fn project_point(intr: &Intrinsics, pose: &Pose, p: &Point3) -> Option<Projection> {
    project_camera_point(intr, &pose.apply_inverse(p))
}

#[inline]
pub fn project_camera_point(intr: &Intrinsics, c: &Point3) -> Option<Projection> {
    if !(c.z > 0.0) {
        return None;
    }
    Some(Projection {
        u: intr.fx * c.x / c.z + intr.cx,
        v: intr.fy * c.y / c.z + intr.cy,
        depth: c.z,
    })
}

/// Camera-frame point seen through pixel `(u, v)` at depth `z` meters.
#[inline]
pub fn backproject_pixel(intr: &Intrinsics, u: f64, v: f64, z: f64) -> Point3 {
    Point3::new((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z)
}

fn check_dims(intr: &Intrinsics, depth: &DepthMap) -> Result<()> {
    if depth.width() != intr.width || depth.height() != intr.height {
        return Err(Error::invalid(format!(
            "depth map is {}x{} but intrinsics expect {}x{}",
            depth.width(),
            depth.height(),
            intr.width,
            intr.height
        )));
    }
    Ok(())
}

/// One camera-frame point per valid pixel, row-major.
pub fn backproject_depth(intr: &Intrinsics, depth: &DepthMap) -> Result<PointCloud> {
    check_dims(intr, depth)?;
    let mut points = Vec::with_capacity(depth.valid_count());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if let Some(z) = depth.meters(u, v) {
                points.push(backproject_pixel(intr, u as f64, v as f64, z));
            }
        }
    }
    Ok(PointCloud::from_trusted(points, None))
}
