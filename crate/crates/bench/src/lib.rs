//! Fixed benchmark inputs shared by the criterion targets.

use mvprop_core::synth::samples::{random_blobs, random_cluster, random_plane_scene};
use mvprop_core::{Point3, PointCloud};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A cuboid-shaped cluster of `n` points with up to 10% outliers.
pub fn cluster(n: usize) -> Vec<Point3> {
    random_cluster(&mut rng(1), n, 0.10).0
}

/// Gaussian blobs, at most `max_points` points in total.
pub fn blobs(max_points: usize, radius: f64) -> Vec<Point3> {
    random_blobs(&mut rng(2), max_points, radius).0
}

/// A few noisy planted planes with clutter.
pub fn plane_scene() -> PointCloud {
    PointCloud::new(random_plane_scene(&mut rng(3), 0.003).0).expect("finite points")
}
