//! Random point-set generators for the oracle cross-checks.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Point3, Vec3};

/// Shape of the inlier body of a [`random_cluster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterShape {
    /// Uniform inside a box.
    Solid,
    /// Uniform on three mutually adjacent faces of a box, as a depth sensor
    /// sees an object from one octant.
    Shell,
    /// Isotropic-ish Gaussian.
    Blob,
}

/// A cluster of `n` points of which a fraction in `[0, max_outlier_fraction]`
/// are far outliers. Returns the points and how many of them (the tail) are
/// outliers.
pub fn random_cluster<R: Rng>(
    rng: &mut R,
    n: usize,
    max_outlier_fraction: f64,
) -> (Vec<Point3>, usize) {
    let outliers = ((n as f64) * rng.random_range(0.0..=max_outlier_fraction)).floor() as usize;
    let inliers = n - outliers;
    let shape = match rng.random_range(0..3) {
        0 => ClusterShape::Solid,
        1 => ClusterShape::Shell,
        _ => ClusterShape::Blob,
    };
    let size = Vec3::new(
        rng.random_range(0.05..0.4),
        rng.random_range(0.05..0.4),
        rng.random_range(0.05..0.4),
    );
    let origin = Vec3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(0.0..2.0),
    );
    let mut pts = Vec::with_capacity(n);
    for _ in 0..inliers {
        let local = match shape {
            ClusterShape::Solid => Vec3::new(
                rng.random_range(0.0..size.x),
                rng.random_range(0.0..size.y),
                rng.random_range(0.0..size.z),
            ),
            ClusterShape::Shell => {
                let mut v = Vec3::new(
                    rng.random_range(0.0..size.x),
                    rng.random_range(0.0..size.y),
                    rng.random_range(0.0..size.z),
                );
                v[rng.random_range(0..3)] = 0.0;
                v
            }
            ClusterShape::Blob => {
                let g = Normal::new(0.0, 1.0).unwrap();
                Vec3::new(
                    g.sample(rng) * size.x / 4.0,
                    g.sample(rng) * size.y / 4.0,
                    g.sample(rng) * size.z / 4.0,
                )
            }
        };
        pts.push(Point3::from(origin + local));
    }
    for _ in 0..outliers {
        let dir = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let dist = rng.random_range(1.0..10.0) * size.max();
        pts.push(Point3::from(origin + size * 0.5 + dir * dist));
    }
    (pts, outliers)
}

/// Separated uniform blobs. Returns the points and each blob's member count.
pub fn random_blobs<R: Rng>(
    rng: &mut R,
    max_points: usize,
    radius: f64,
) -> (Vec<Point3>, Vec<usize>) {
    let blobs = rng.random_range(1..=5);
    let mut centers: Vec<Vec3> = Vec::new();
    while centers.len() < blobs {
        let c = Vec3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        // Keep blobs well outside each other's kernel.
        if centers.iter().all(|o| (o - c).norm() > 4.0 * radius) {
            centers.push(c);
        }
    }
    let per = max_points / blobs;
    let mut pts = Vec::new();
    let mut sizes = Vec::new();
    for c in &centers {
        let count = rng.random_range(per / 4..=per).max(1);
        let spread = rng.random_range(0.2..0.6) * radius;
        for _ in 0..count {
            pts.push(Point3::from(
                c + Vec3::new(
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                ),
            ));
        }
        sizes.push(count);
    }
    (pts, sizes)
}

/// A planted plane: unit normal, offset and the indices of its points.
#[derive(Debug, Clone)]
pub struct PlantedPlane {
    pub normal: Vec3,
    pub rho: f64,
    pub indices: Vec<usize>,
}

/// 2–4 square plane patches with random orientation, Gaussian noise along the
/// normal, plus a little uniform clutter.
pub fn random_plane_scene<R: Rng>(rng: &mut R, sigma: f64) -> (Vec<Point3>, Vec<PlantedPlane>) {
    let count = rng.random_range(2..=4);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut pts = Vec::new();
    let mut planes: Vec<PlantedPlane> = Vec::new();
    while planes.len() < count {
        let normal = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if normal.norm() < 0.2 {
            continue;
        }
        let normal = normal.normalize();
        // Distinct orientations so the patches do not merge into one plane.
        if planes.iter().any(|p| p.normal.dot(&normal).abs() > 0.95) {
            continue;
        }
        let center = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let u = normal
            .cross(&if normal.x.abs() < 0.9 {
                Vec3::x()
            } else {
                Vec3::y()
            })
            .normalize();
        let v = normal.cross(&u);
        let half = rng.random_range(0.5..1.2);
        let n = rng.random_range(1500..4000);
        let start = pts.len();
        for _ in 0..n {
            let a = rng.random_range(-half..half);
            let b = rng.random_range(-half..half);
            pts.push(Point3::from(
                center + u * a + v * b + normal * noise.sample(rng),
            ));
        }
        planes.push(PlantedPlane {
            normal,
            rho: normal.dot(&center),
            indices: (start..start + n).collect(),
        });
    }
    for _ in 0..200 {
        pts.push(Point3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ));
    }
    (pts, planes)
}
