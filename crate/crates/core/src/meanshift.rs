//! Flat-kernel mean shift.
//!
//! Every seed repeatedly moves to the mean of the points within `radius` of
//! its current position. Converged positions closer than `radius / 2` are
//! merged, strongest first, and every point joins the cluster of the seed
//! it started from (or, when seeds are subsampled, of its nearest seed).

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Ascending indices into the clustered point set.
    pub point_indices: Vec<usize>,
    pub mode: Point3,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanShiftParams {
    /// Stop when a seed moves less than this (meters).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Upper bound on seeds; larger inputs use every k-th point.
    pub max_seeds: usize,
    pub seed: u64,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 100,
            max_seeds: 20_000,
            seed: 0,
        }
    }
}

/// Uniform grid with per-cell coordinate sums so that cells entirely inside
/// the query ball are accumulated without visiting their points.
pub(crate) struct BallSums {
    cell: f64,
    inv_cell: f64,
    cells: HashMap<[i64; 3], CellEntry>,
    /// Points reordered so each cell's points are contiguous.
    sorted: Vec<Point3>,
}

struct CellEntry {
    start: usize,
    end: usize,
    sum: Vec3,
}

impl BallSums {
    pub(crate) fn new(points: &[Point3], cell: f64) -> Self {
        let inv_cell = 1.0 / cell;
        let key = |p: &Point3| {
            [
                (p.x * inv_cell).floor() as i64,
                (p.y * inv_cell).floor() as i64,
                (p.z * inv_cell).floor() as i64,
            ]
        };
        let mut order: Vec<(usize, [i64; 3])> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, key(p)))
            .collect();
        order.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let sorted: Vec<Point3> = order.iter().map(|&(i, _)| points[i]).collect();
        let mut cells = HashMap::new();
        let mut start = 0;
        while start < order.len() {
            let k = order[start].1;
            let mut end = start;
            let mut sum = Vec3::zeros();
            while end < order.len() && order[end].1 == k {
                sum += sorted[end].coords;
                end += 1;
            }
            cells.insert(k, CellEntry { start, end, sum });
            start = end;
        }
        Self {
            cell,
            inv_cell,
            cells,
            sorted,
        }
    }

    /// Sum and count of the points within `radius` of `q` (closed ball).
    pub(crate) fn ball(&self, q: &Point3, radius: f64) -> (Vec3, usize) {
        let r2 = radius * radius;
        let lo = [
            ((q.x - radius) * self.inv_cell).floor() as i64,
            ((q.y - radius) * self.inv_cell).floor() as i64,
            ((q.z - radius) * self.inv_cell).floor() as i64,
        ];
        let hi = [
            ((q.x + radius) * self.inv_cell).floor() as i64,
            ((q.y + radius) * self.inv_cell).floor() as i64,
            ((q.z + radius) * self.inv_cell).floor() as i64,
        ];
        let mut sum = Vec3::zeros();
        let mut count = 0usize;
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let Some(entry) = self.cells.get(&[x, y, z]) else {
                        continue;
                    };
                    let (near, far) = self.cell_distances(q, [x, y, z]);
                    if near > r2 {
                        continue;
                    }
                    if far <= r2 {
                        sum += entry.sum;
                        count += entry.end - entry.start;
                        continue;
                    }
                    for p in &self.sorted[entry.start..entry.end] {
                        if (p - q).norm_squared() <= r2 {
                            sum += p.coords;
                            count += 1;
                        }
                    }
                }
            }
        }
        (sum, count)
    }

    /// Squared min and max distance from `q` to the cell box. The max is
    /// padded slightly so that rounding never admits a point outside the ball.
    fn cell_distances(&self, q: &Point3, key: [i64; 3]) -> (f64, f64) {
        let mut near = 0.0;
        let mut far = 0.0;
        for k in 0..3 {
            let lo = key[k] as f64 * self.cell;
            let hi = lo + self.cell;
            let c = q[k];
            let d_near = if c < lo {
                lo - c
            } else if c > hi {
                c - hi
            } else {
                0.0
            };
            let d_far = (c - lo).abs().max((hi - c).abs());
            near += d_near * d_near;
            far += d_far * d_far;
        }
        (near, far * (1.0 + 1e-9) + 1e-12)
    }
}

/// Converged position of one seed.
fn climb(index: &BallSums, start: Point3, radius: f64, params: &MeanShiftParams) -> Point3 {
    let mut m = start;
    for _ in 0..params.max_iterations {
        let (sum, count) = index.ball(&m, radius);
        if count == 0 {
            break;
        }
        let next = Point3::from(sum / count as f64);
        let step = (next - m).norm();
        m = next;
        if step < params.tolerance {
            break;
        }
    }
    m
}

/// Greedy merge of converged positions. Positions are visited by descending
/// support (points within `radius`), ties by seed order; each joins the first
/// earlier group whose leading position is closer than `radius / 2`.
/// Returns the group of every position and each group's member mean.
fn merge_modes(index: &BallSums, raw: &[Point3], radius: f64) -> (Vec<usize>, Vec<Point3>) {
    let support: Vec<usize> = raw.par_iter().map(|m| index.ball(m, radius).1).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| support[b].cmp(&support[a]).then(a.cmp(&b)));

    let merge2 = (radius / 2.0) * (radius / 2.0);
    let mut leaders: Vec<Point3> = Vec::new();
    // Leaders indexed on a coarse grid for the proximity test.
    let mut leader_grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let inv = 2.0 / radius;
    let key = |p: &Point3| {
        [
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        ]
    };
    let mut group = vec![usize::MAX; raw.len()];
    for &i in &order {
        let p = raw[i];
        let k = key(&p);
        let mut found: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = leader_grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &g in ids {
                            if (leaders[g] - p).norm_squared() < merge2 {
                                found = Some(found.map_or(g, |f: usize| f.min(g)));
                            }
                        }
                    }
                }
            }
        }
        group[i] = match found {
            Some(g) => g,
            None => {
                leaders.push(p);
                leader_grid.entry(k).or_default().push(leaders.len() - 1);
                leaders.len() - 1
            }
        };
    }
    let mut sums = vec![(Vec3::zeros(), 0usize); leaders.len()];
    for (i, &g) in group.iter().enumerate() {
        sums[g].0 += raw[i].coords;
        sums[g].1 += 1;
    }
    let modes = sums
        .into_iter()
        .map(|(s, n)| Point3::from(s / n as f64))
        .collect();
    (group, modes)
}

/// Seed indices: all points, or every k-th point from a seeded offset.
pub fn seed_indices(n: usize, params: &MeanShiftParams) -> Vec<usize> {
    if n <= params.max_seeds.max(1) {
        return (0..n).collect();
    }
    let k = n.div_ceil(params.max_seeds.max(1));
    let offset = (params.seed % k as u64) as usize;
    (offset..n).step_by(k).collect()
}

pub fn mean_shift(
    points: &[Point3],
    radius: f64,
    params: &MeanShiftParams,
) -> Result<Vec<Cluster>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "mean-shift radius must be positive, got {radius}"
        )));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let index = BallSums::new(points, radius / 2.0);
    let seeds = seed_indices(points.len(), params);
    let raw: Vec<Point3> = seeds
        .par_iter()
        .map(|&s| climb(&index, points[s], radius, params))
        .collect();
    let (seed_group, modes) = merge_modes(&index, &raw, radius);

    let point_group: Vec<usize> = if seeds.len() == points.len() {
        seed_group
    } else {
        let nearest = NearestSeed::new(points, &seeds, radius);
        points
            .par_iter()
            .map(|p| seed_group[nearest.find(p)])
            .collect()
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); modes.len()];
    for (i, &g) in point_group.iter().enumerate() {
        members[g].push(i);
    }
    let mut clusters: Vec<Cluster> = members
        .into_iter()
        .zip(modes)
        .filter(|(m, _)| !m.is_empty())
        .map(|(point_indices, mode)| Cluster {
            point_indices,
            mode,
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(a.point_indices[0].cmp(&b.point_indices[0]))
    });
    Ok(clusters)
}

/// Nearest-seed lookup on a uniform grid, searching outward ring by ring.
struct NearestSeed<'a> {
    points: &'a [Point3],
    seeds: &'a [usize],
    inv: f64,
    cell: f64,
    grid: HashMap<[i64; 3], Vec<usize>>,
    max_ring: i64,
}

impl<'a> NearestSeed<'a> {
    fn new(points: &'a [Point3], seeds: &'a [usize], cell: f64) -> Self {
        let inv = 1.0 / cell;
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let (mut lo, mut hi) = ([i64::MAX; 3], [i64::MIN; 3]);
        for (si, &pi) in seeds.iter().enumerate() {
            let k = Self::key_of(&points[pi], inv);
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            grid.entry(k).or_default().push(si);
        }
        let max_ring = (0..3).map(|a| hi[a] - lo[a]).max().unwrap_or(0) + 2;
        Self {
            points,
            seeds,
            inv,
            cell,
            grid,
            max_ring,
        }
    }

    fn key_of(p: &Point3, inv: f64) -> [i64; 3] {
        [
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        ]
    }

    /// Index into `seeds` of the nearest seed; ties go to the lower index.
    fn find(&self, p: &Point3) -> usize {
        let k = Self::key_of(p, self.inv);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..=self.max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let Some(ids) = self.grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                            continue;
                        };
                        for &si in ids {
                            let d = (self.points[self.seeds[si]] - p).norm_squared();
                            let better = match best {
                                None => true,
                                Some((bd, bs)) => d < bd || (d == bd && si < bs),
                            };
                            if better {
                                best = Some((d, si));
                            }
                        }
                    }
                }
            }
            // Anything in a further ring is at least `ring * cell` away.
            if let Some((d, s)) = best {
                let reach = ring as f64 * self.cell;
                if d <= reach * reach {
                    return s;
                }
            }
        }
        best.map(|b| b.1).expect("at least one seed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut ChaCha8Rng, center: Point3, n: usize, spread: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                center
                    + Vec3::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    )
            })
            .collect()
    }

    fn centroid(pts: &[Point3]) -> Point3 {
        Point3::from(pts.iter().map(|p| p.coords).sum::<Vec3>() / pts.len() as f64)
    }

    #[test]
    fn single_point() {
        let p = Point3::new(0.3, -1.0, 2.0);
        let c = mean_shift(&[p], 0.5, &MeanShiftParams::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].mode, p);
        assert_eq!(c[0].point_indices, vec![0]);
    }

    #[test]
    fn empty_and_bad_radius() {
        assert!(mean_shift(&[], 0.3, &MeanShiftParams::default())
            .unwrap()
            .is_empty());
        assert!(mean_shift(&[Point3::origin()], 0.0, &MeanShiftParams::default()).is_err());
    }

    #[test]
    fn two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = blob(&mut rng, Point3::new(0.0, 0.0, 0.0), 50, 0.05);
        let b = blob(&mut rng, Point3::new(1.0, 0.0, 0.0), 50, 0.05);
        let pts: Vec<Point3> = a.iter().chain(&b).copied().collect();
        let clusters = mean_shift(&pts, 0.3, &MeanShiftParams::default()).unwrap();
        assert_eq!(clusters.len(), 2);
        assert!(clusters.iter().all(|c| c.len() == 50));
        let (ca, cb) = (centroid(&a), centroid(&b));
        for c in &clusters {
            let d = (c.mode - ca).norm().min((c.mode - cb).norm());
            assert!(d < 0.01, "mode off by {d}");
        }
    }

    #[test]
    fn ball_sums_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = blob(&mut rng, Point3::origin(), 2000, 1.0);
        let index = BallSums::new(&pts, 0.2);
        for _ in 0..200 {
            let q = Point3::new(
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            );
            let (s, n) = index.ball(&q, 0.4);
            let brute: Vec<&Point3> = pts
                .iter()
                .filter(|p| (*p - q).norm_squared() <= 0.16)
                .collect();
            assert_eq!(n, brute.len());
            let bs: Vec3 = brute.iter().map(|p| p.coords).sum();
            assert!((s - bs).norm() < 1e-9);
        }
    }

    #[test]
    fn subsampled_seeds_still_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = blob(&mut rng, Point3::origin(), 600, 0.1);
        pts.extend(blob(&mut rng, Point3::new(2.0, 0.0, 0.0), 400, 0.1));
        let params = MeanShiftParams {
            max_seeds: 97,
            ..Default::default()
        };
        let clusters = mean_shift(&pts, 0.4, &params).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].len(), 600);
        assert_eq!(clusters[1].len(), 400);
    }

    #[test]
    fn seed_schedule() {
        let p = MeanShiftParams {
            max_seeds: 10,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(seed_indices(5, &p), vec![0, 1, 2, 3, 4]);
        let s = seed_indices(35, &p);
        assert_eq!(s, vec![3, 7, 11, 15, 19, 23, 27, 31]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn partition_and_hull(seed in any::<u64>(), n in 1usize..300, radius in 0.05..0.8f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = blob(&mut rng, Point3::origin(), n, 1.0);
            let clusters = mean_shift(&pts, radius, &MeanShiftParams::default()).unwrap();
            let mut seen = vec![0u8; n];
            for c in &clusters {
                prop_assert!(!c.is_empty());
                for &i in &c.point_indices { seen[i] += 1; }
                for k in 0..3 {
                    let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
                    let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(c.mode[k] >= lo - 1e-12 && c.mode[k] <= hi + 1e-12);
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            prop_assert!(clusters.windows(2).all(|w| w[0].len() >= w[1].len()));
        }

        #[test]
        fn scaling_equivariance(seed in any::<u64>(), exp in -2i32..3) {
            let s = 2f64.powi(exp);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = blob(&mut rng, Point3::origin(), 80, 0.2);
            pts.extend(blob(&mut rng, Point3::new(0.9, 0.4, 0.0), 60, 0.2));
            let scaled: Vec<Point3> = pts.iter().map(|p| Point3::from(p.coords * s)).collect();
            let params = MeanShiftParams::default();
            let a = mean_shift(&pts, 0.35, &params).unwrap();
            let b = mean_shift(&scaled, 0.35 * s, &params).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (ca, cb) in a.iter().zip(&b) {
                prop_assert_eq!(&ca.point_indices, &cb.point_indices);
                // Exact up to the unscaled stopping tolerance.
                prop_assert!((ca.mode.coords * s - cb.mode.coords).norm() <= 2e-4 * s.max(1.0));
            }
        }
    }
}
