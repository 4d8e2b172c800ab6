//! Plane detection with a deterministic 3D Hough transform and removal of the
//! largest detected planes.
//!
//! Every (retained) point votes once per discretized normal direction into the
//! offset bin of `ρ = n·p`. The strongest cell seeds a plane which is then
//! refined by least squares on the full cloud; its inliers withdraw their
//! votes and the search repeats.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    /// Unit normal; plane is `normal · p = rho`.
    pub normal: [f64; 3],
    pub rho: f64,
    pub inlier_count: usize,
    #[serde(skip)]
    pub inlier_indices: Vec<usize>,
}

impl PlaneModel {
    pub fn normal_vec(&self) -> Vec3 {
        Vec3::from(self.normal)
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z - self.rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughParams {
    /// Polar bins over the hemisphere `[0, π/2]`.
    pub theta_bins: usize,
    /// Azimuth bins over `[0, 2π)`.
    pub phi_bins: usize,
    pub rho_resolution: f64,
    pub inlier_threshold: f64,
    /// Absolute floor on plane support.
    pub min_inliers: usize,
    /// Support floor relative to the input size; the larger floor applies.
    pub min_inliers_fraction: f64,
    pub max_planes: usize,
    /// Points drawn (without replacement) for voting; larger clouds are subsampled.
    pub vote_budget: usize,
    pub seed: u64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            theta_bins: 90,
            phi_bins: 180,
            rho_resolution: 0.02,
            inlier_threshold: 0.01,
            min_inliers: 3,
            min_inliers_fraction: 0.005,
            max_planes: 64,
            vote_budget: 200_000,
            seed: 0,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.theta_bins > 0
            && self.phi_bins > 0
            && self.rho_resolution > 0.0
            && self.inlier_threshold > 0.0
            && self.min_inliers > 0
            && self.max_planes > 0
            && self.vote_budget > 0
            && (0.0..=1.0).contains(&self.min_inliers_fraction);
        if positive {
            Ok(())
        } else {
            Err(Error::invalid("Hough parameters must all be positive"))
        }
    }

    pub fn effective_min_inliers(&self, n: usize) -> usize {
        let rel = (self.min_inliers_fraction * n as f64).ceil() as usize;
        self.min_inliers.max(rel).max(3)
    }
}

/// Bin index of `t` in `[0, 2^22)`: rounds `t - 0.5` via the float mantissa,
/// which vectorizes where a checked float-to-int cast does not. Exact
/// integers may land one bin low; the choice is deterministic.
#[inline(always)]
fn floor_small(t: f32) -> u32 {
    (t - 0.5 + 8_388_608.0).to_bits() & 0x007F_FFFF
}

struct Accumulator {
    dirs: Vec<Vec3>,
    rho_min: f64,
    rho_bins: usize,
    inv_res: f64,
    cells: Vec<u32>,
}

impl Accumulator {
    fn new(params: &HoughParams, max_radius: f64) -> Self {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let two_pi = std::f64::consts::TAU;
        let mut dirs = Vec::with_capacity(params.theta_bins * params.phi_bins);
        for i in 0..params.theta_bins {
            let theta = (i as f64 + 0.5) * half_pi / params.theta_bins as f64;
            for j in 0..params.phi_bins {
                let phi = (j as f64 + 0.5) * two_pi / params.phi_bins as f64;
                dirs.push(Vec3::new(
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ));
            }
        }
        let rho_min = -max_radius - params.rho_resolution;
        let rho_bins = ((2.0 * (max_radius + params.rho_resolution)) / params.rho_resolution).ceil()
            as usize
            + 1;
        let cells = vec![0u32; dirs.len() * rho_bins];
        Self {
            dirs,
            rho_min,
            rho_bins,
            inv_res: 1.0 / params.rho_resolution,
            cells,
        }
    }

    /// Adds (`add = true`) or withdraws the votes of `points`.
    ///
    /// Blocked over direction rows and point chunks so both stay in cache.
    /// Votes go to four interleaved partial rows first: planar input sends
    /// long runs to one bin, and a single counter would serialize them.
    fn vote(&mut self, points: &[Point3], add: bool) {
        const ROWS: usize = 16;
        const CHUNK: usize = 8192;
        let (rho_min, inv_res, bins) = (self.rho_min as f32, self.inv_res as f32, self.rho_bins);
        let dirs: Vec<[f32; 3]> = self
            .dirs
            .iter()
            .map(|d| [d.x as f32, d.y as f32, d.z as f32])
            .collect();
        let xs: Vec<f32> = points.iter().map(|p| p.x as f32).collect();
        let ys: Vec<f32> = points.iter().map(|p| p.y as f32).collect();
        let zs: Vec<f32> = points.iter().map(|p| p.z as f32).collect();
        let last = (bins - 1) as f32;
        self.cells
            .par_chunks_mut(bins * ROWS)
            .enumerate()
            .for_each(|(block, rows)| {
                let first = block * ROWS;
                let mut idx = vec![0u32; CHUNK];
                let mut partial = vec![0u32; 4 * bins];
                for start in (0..xs.len()).step_by(CHUNK) {
                    let end = (start + CHUNK).min(xs.len());
                    let (cx, cy, cz) = (&xs[start..end], &ys[start..end], &zs[start..end]);
                    let idx = &mut idx[..end - start];
                    for (r, row) in rows.chunks_mut(bins).enumerate() {
                        let [nx, ny, nz] = dirs[first + r];
                        for k in 0..idx.len() {
                            let t = ((nx * cx[k] + ny * cy[k] + nz * cz[k] - rho_min) * inv_res)
                                .clamp(0.0, last);
                            idx[k] = floor_small(t);
                        }
                        partial.fill(0);
                        let (p0, rest) = partial.split_at_mut(bins);
                        let (p1, rest) = rest.split_at_mut(bins);
                        let (p2, p3) = rest.split_at_mut(bins);
                        let mut quads = idx.chunks_exact(4);
                        for q in &mut quads {
                            p0[q[0] as usize] += 1;
                            p1[q[1] as usize] += 1;
                            p2[q[2] as usize] += 1;
                            p3[q[3] as usize] += 1;
                        }
                        for &b in quads.remainder() {
                            p0[b as usize] += 1;
                        }
                        for (k, cell) in row.iter_mut().enumerate() {
                            let c = p0[k] + p1[k] + p2[k] + p3[k];
                            if add {
                                *cell += c;
                            } else {
                                *cell -= c;
                            }
                        }
                    }
                }
            });
    }

    fn clear(&mut self) {
        self.cells.fill(0);
    }

    /// Highest live cell; ties go to the lowest index.
    fn peak(&self, retired: &HashSet<usize>) -> (usize, u32) {
        let mut best = (0, 0u32);
        for (i, &c) in self.cells.iter().enumerate() {
            if c > best.1 && !retired.contains(&i) {
                best = (i, c);
            }
        }
        best
    }

    fn cell_plane(&self, cell: usize) -> (Vec3, f64) {
        let d = cell / self.rho_bins;
        let b = cell % self.rho_bins;
        (self.dirs[d], self.rho_min + (b as f64 + 0.5) / self.inv_res)
    }
}

/// Least-squares plane through `points` (centroid + smallest principal axis).
pub fn fit_plane(points: impl Iterator<Item = Point3> + Clone) -> Option<(Vec3, f64)> {
    let mut n = 0usize;
    let mut c = Vec3::zeros();
    for p in points.clone() {
        c += p.coords;
        n += 1;
    }
    if n < 3 {
        return None;
    }
    c /= n as f64;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))?;
    let normal = eig.eigenvectors.column(k).into_owned().normalize();
    if !normal.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((normal, normal.dot(&c)))
}

/// Canonical sign: positive offset, or for planes through the origin the
/// first non-zero normal component positive.
fn canonical(normal: Vec3, rho: f64) -> (Vec3, f64) {
    let flip = if rho.abs() > 1e-9 {
        rho < 0.0
    } else {
        let first = normal
            .iter()
            .find(|v| v.abs() > 1e-12)
            .copied()
            .unwrap_or(1.0);
        first < 0.0
    };
    if flip {
        (-normal, -rho)
    } else {
        (normal, rho)
    }
}

fn plane_order(a: &PlaneModel, b: &PlaneModel) -> std::cmp::Ordering {
    b.inlier_count
        .cmp(&a.inlier_count)
        .then(a.rho.total_cmp(&b.rho))
        .then(a.normal[0].total_cmp(&b.normal[0]))
        .then(a.normal[1].total_cmp(&b.normal[1]))
        .then(a.normal[2].total_cmp(&b.normal[2]))
}

const REFINE_ROUNDS: usize = 8;
const MAX_DEAD_PEAKS: usize = 64;

/// Detects planes, largest first.
pub fn detect_planes(cloud: &PointCloud, params: &HoughParams) -> Result<Vec<PlaneModel>> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::invalid("cannot detect planes in an empty cloud"));
    }
    let pts = cloud.points();
    let n = pts.len();
    let min_inliers = params.effective_min_inliers(n);

    let mut voters: Vec<usize> = if n > params.vote_budget {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut v = sample(&mut rng, n, params.vote_budget).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    // Votes are in sample units; rescale the support floor accordingly.
    let min_votes = ((min_inliers as f64) * voters.len() as f64 / n as f64)
        .floor()
        .max(1.0) as u32;

    let max_radius = pts.iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
    let mut acc = Accumulator::new(params, max_radius);
    let voter_pts: Vec<Point3> = voters.iter().map(|&i| pts[i]).collect();
    acc.vote(&voter_pts, true);

    let mut alive = vec![true; n];
    let mut planes = Vec::new();
    let mut retired = HashSet::new();
    while planes.len() < params.max_planes {
        let (cell, votes) = acc.peak(&retired);
        if votes < min_votes {
            break;
        }
        let (dir, rho) = acc.cell_plane(cell);
        let refined = refine(pts, &alive, dir, rho, params);
        let accepted = refined.filter(|(_, _, inl)| inl.len() >= min_inliers);
        let Some((normal, rho, inliers)) = accepted else {
            // Unsupported peak: retire the cell and keep looking.
            retired.insert(cell);
            if retired.len() >= MAX_DEAD_PEAKS {
                break;
            }
            continue;
        };
        for &i in &inliers {
            alive[i] = false;
        }
        let (gone, kept): (Vec<usize>, Vec<usize>) = voters.iter().partition(|&&i| !alive[i]);
        // Withdraw the removed votes, or recount the survivors if cheaper.
        if gone.len() <= kept.len() {
            let gone_pts: Vec<Point3> = gone.iter().map(|&i| pts[i]).collect();
            acc.vote(&gone_pts, false);
        } else {
            let kept_pts: Vec<Point3> = kept.iter().map(|&i| pts[i]).collect();
            acc.clear();
            acc.vote(&kept_pts, true);
        }
        voters = kept;
        if gone.is_empty() {
            // The plane drew no votes; retire the cell so the loop progresses.
            retired.insert(cell);
        }
        let (normal, rho) = canonical(normal, rho);
        planes.push(PlaneModel {
            normal: [normal.x, normal.y, normal.z],
            rho,
            inlier_count: inliers.len(),
            inlier_indices: inliers,
        });
    }
    planes.sort_by(plane_order);
    Ok(planes)
}

/// Least-squares refinement of a coarse plane over the alive points.
fn refine(
    pts: &[Point3],
    alive: &[bool],
    dir: Vec3,
    rho: f64,
    params: &HoughParams,
) -> Option<(Vec3, f64, Vec<usize>)> {
    let within = |normal: Vec3, rho: f64, tol: f64| -> Vec<usize> {
        pts.par_iter()
            .enumerate()
            .filter(|(i, p)| alive[*i] && (normal.dot(&p.coords) - rho).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    };
    let fit = |idx: &[usize]| fit_plane(idx.iter().map(|&i| pts[i]));

    // The cell is only accurate to its bin width, so start from a wider band.
    let coarse = params.rho_resolution.max(params.inlier_threshold);
    let mut members = within(dir, rho, coarse);
    let (mut normal, mut offset) = fit(&members)?;
    for _ in 0..REFINE_ROUNDS {
        let next = within(normal, offset, params.inlier_threshold);
        if next == members {
            break;
        }
        members = next;
        (normal, offset) = fit(&members)?;
    }
    let inliers = within(normal, offset, params.inlier_threshold);
    if inliers.len() < 3 {
        return None;
    }
    Some((normal, offset, inliers))
}

/// Number of planes removed for `fraction`: `round(fraction · count)` with
/// halves rounded away from zero, at least one, at most `count`.
pub fn planes_to_remove(count: usize, fraction: f64) -> usize {
    if count == 0 {
        return 0;
    }
    ((fraction * count as f64).round() as usize).clamp(1, count)
}

/// Indices (ascending) of the points left after removing the largest planes.
pub fn remaining_indices(n: usize, planes: &[PlaneModel], fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "plane fraction {fraction} outside (0, 1]"
        )));
    }
    if planes
        .windows(2)
        .any(|w| w[0].inlier_count < w[1].inlier_count)
    {
        return Err(Error::invalid("planes must be sorted by inlier count"));
    }
    let mut keep = vec![true; n];
    for plane in &planes[..planes_to_remove(planes.len(), fraction)] {
        for &i in &plane.inlier_indices {
            if i >= n {
                return Err(Error::invalid("plane inlier index out of range"));
            }
            keep[i] = false;
        }
    }
    Ok((0..n).filter(|&i| keep[i]).collect())
}

/// Cloud without the inliers of the largest `fraction` of `planes`.
pub fn remove_planes(
    cloud: &PointCloud,
    planes: &[PlaneModel],
    fraction: f64,
) -> Result<PointCloud> {
    Ok(cloud.select(&remaining_indices(cloud.len(), planes, fraction)?))
}

/// Rebuilds inlier sets for planes known only by their parameters (e.g. read
/// from JSON): in list order, each plane claims the unclaimed points within
/// `threshold`. Inlier counts are updated and the list re-sorted.
pub fn assign_inliers(cloud: &PointCloud, planes: &mut [PlaneModel], threshold: f64) {
    let mut claimed = vec![false; cloud.len()];
    for plane in planes.iter_mut() {
        plane.inlier_indices = cloud
            .points()
            .iter()
            .enumerate()
            .filter(|(i, p)| !claimed[*i] && plane.signed_distance(p).abs() <= threshold)
            .map(|(i, _)| i)
            .collect();
        for &i in &plane.inlier_indices {
            claimed[i] = true;
        }
        plane.inlier_count = plane.inlier_indices.len();
    }
    planes.sort_by(plane_order);
}

/// Removal fractions applied to every scene.
pub const DEFAULT_PLANE_FRACTIONS: [f64; 5] = [0.50, 0.33, 0.25, 0.15, 0.10];

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn plane_patch(rng: &mut ChaCha8Rng, n: usize, z: f64, half: f64, sigma: f64) -> Vec<Point3> {
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        (0..n)
            .map(|_| {
                let dz = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                Point3::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    z + dz,
                )
            })
            .collect()
    }

    #[test]
    fn reassigned_inliers_match_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (pts, _) = crate::synth::samples::random_plane_scene(&mut rng, 0.003);
        let cloud = PointCloud::new(pts).unwrap();
        let params = HoughParams::default();
        let planes = detect_planes(&cloud, &params).unwrap();
        let mut reread: Vec<PlaneModel> =
            serde_json::from_str(&serde_json::to_string(&planes).unwrap()).unwrap();
        assert!(reread.iter().all(|p| p.inlier_indices.is_empty()));
        assign_inliers(&cloud, &mut reread, params.inlier_threshold);
        for (a, b) in planes.iter().zip(&reread) {
            let common = a
                .inlier_indices
                .iter()
                .filter(|i| b.inlier_indices.binary_search(i).is_ok())
                .count();
            assert!(common as f64 >= 0.98 * a.inlier_count as f64);
        }
    }

    #[test]
    fn recovers_planted_plane_among_clutter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = plane_patch(&mut rng, 1000, 0.8, 1.0, 0.0);
        for _ in 0..50 {
            pts.push(Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ));
        }
        let cloud = PointCloud::new(pts).unwrap();
        let planes = detect_planes(&cloud, &HoughParams::default()).unwrap();
        let p = &planes[0];
        let angle = p.normal[2].abs().clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle < 1.0, "normal off by {angle} deg");
        assert!((p.rho - 0.8).abs() < 0.02);
        assert!(p.inlier_count >= 990, "{}", p.inlier_count);
        assert_eq!(p.normal[2], p.normal[2].abs());
    }

    #[test]
    fn parallel_planes_equal_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = plane_patch(&mut rng, 800, 0.2, 0.6, 0.002);
        pts.extend(plane_patch(&mut rng, 800, 0.7, 0.6, 0.002));
        let cloud = PointCloud::new(pts).unwrap();
        let planes = detect_planes(&cloud, &HoughParams::default()).unwrap();
        assert_eq!(planes.len(), 2);
        let (a, b) = (planes[0].inlier_count as f64, planes[1].inlier_count as f64);
        assert!((a - b).abs() / a.max(b) <= 0.02);
        let mut rhos: Vec<f64> = planes.iter().map(|p| p.rho).collect();
        rhos.sort_by(f64::total_cmp);
        assert!((rhos[0] - 0.2).abs() < 0.02 && (rhos[1] - 0.7).abs() < 0.02);
        if planes[0].inlier_count == planes[1].inlier_count {
            assert!(planes[0].rho < planes[1].rho);
        }
    }

    #[test]
    fn no_supported_plane_gives_empty_list() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.3, 0.2),
            Point3::new(0.1, 1.0, 0.7),
            Point3::new(0.5, 0.2, 1.0),
        ])
        .unwrap();
        let params = HoughParams {
            min_inliers: 10,
            ..Default::default()
        };
        assert!(detect_planes(&cloud, &params).unwrap().is_empty());
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(detect_planes(&PointCloud::empty(), &HoughParams::default()).is_err());
    }

    #[test]
    fn inliers_are_within_threshold_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = plane_patch(&mut rng, 3000, 0.0, 1.0, 0.003);
        let wall: Vec<Point3> = plane_patch(&mut rng, 2000, 0.0, 0.8, 0.003)
            .into_iter()
            .map(|p| Point3::new(p.z + 0.5, p.x, p.y + 0.8))
            .collect();
        pts.extend(wall);
        let cloud = PointCloud::new(pts).unwrap();
        let params = HoughParams {
            vote_budget: 2500,
            ..Default::default()
        };
        let planes = detect_planes(&cloud, &params).unwrap();
        assert!(planes.len() >= 2);
        for p in &planes {
            assert_eq!(p.inlier_count, p.inlier_indices.len());
            assert!((p.normal_vec().norm() - 1.0).abs() < 1e-9);
            for &i in &p.inlier_indices {
                assert!(p.signed_distance(&cloud.points()[i]).abs() <= params.inlier_threshold);
            }
        }
        assert!(planes
            .windows(2)
            .all(|w| w[0].inlier_count >= w[1].inlier_count));
        assert_eq!(detect_planes(&cloud, &params).unwrap(), planes);
    }

    #[test]
    fn removal_counts() {
        assert_eq!(planes_to_remove(6, 0.33), 2);
        assert_eq!(planes_to_remove(6, 0.10), 1);
        assert_eq!(planes_to_remove(4, 0.125), 1); // 0.5 rounds away from zero
        assert_eq!(planes_to_remove(3, 0.5), 2);
        assert_eq!(planes_to_remove(10, 1.0), 10);
        assert_eq!(planes_to_remove(0, 0.5), 0);
    }

    fn fake_plane(count: usize, idx: Vec<usize>) -> PlaneModel {
        PlaneModel {
            normal: [0.0, 0.0, 1.0],
            rho: 0.0,
            inlier_count: count,
            inlier_indices: idx,
        }
    }

    #[test]
    fn removal_keeps_order_and_handles_empty_list() {
        let cloud =
            PointCloud::new((0..6).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        assert_eq!(remove_planes(&cloud, &[], 0.5).unwrap(), cloud);
        let planes = vec![fake_plane(3, vec![0, 2, 4]), fake_plane(1, vec![5])];
        let out = remove_planes(&cloud, &planes, 0.5).unwrap();
        let xs: Vec<f64> = out.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 3.0, 5.0]);
        assert!(remove_planes(&cloud, &planes, 0.0).is_err());
        let unsorted = vec![fake_plane(1, vec![5]), fake_plane(3, vec![0])];
        assert!(remove_planes(&cloud, &unsorted, 0.5).is_err());
    }

    #[test]
    fn five_fractions_give_five_clouds() {
        let cloud =
            PointCloud::new((0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let planes: Vec<PlaneModel> = (0..10).map(|i| fake_plane(10 - i, vec![i])).collect();
        let sizes: Vec<usize> = DEFAULT_PLANE_FRACTIONS
            .iter()
            .map(|&f| remove_planes(&cloud, &planes, f).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![5, 7, 7, 8, 9]);
    }
}
