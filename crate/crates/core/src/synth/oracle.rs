//! Brute-force reference solvers for small inputs.

use crate::cuboid::{cuboid_objective, required_count, Cuboid3D};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

pub const ORACLE_CUBOID_MAX_POINTS: usize = 500;
pub const ORACLE_MODES_MAX_POINTS: usize = 2000;

/// Exhaustive minimum of `volume / included` over axis-aligned boxes whose
/// faces sit on point coordinates and that hold at least `ceil(coverage · n)`
/// points. Ties prefer more points, then lexicographically smaller corners.
///
/// The optimum is always the bounding box of its own contents, so restricting
/// faces to point coordinates loses nothing. A face can only sit on one of the
/// `n − required + 1` outermost coordinates of its side, otherwise too many
/// points would be cut.
pub fn oracle_cuboid(points: &[Point3], coverage: f64) -> Result<Cuboid3D> {
    if points.is_empty() {
        return Err(Error::invalid("oracle_cuboid needs at least one point"));
    }
    if points.len() > ORACLE_CUBOID_MAX_POINTS {
        return Err(Error::invalid(format!(
            "oracle_cuboid is limited to {ORACLE_CUBOID_MAX_POINTS} points"
        )));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid("coverage must lie in (0, 1]"));
    }
    let n = points.len();
    let m = required_count(n, coverage);

    let mut by_z: Vec<Point3> = points.to_vec();
    by_z.sort_by(|a, b| a.z.total_cmp(&b.z));

    let mut best: Option<(f64, usize, [f64; 6])> = None;
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let (x_lows, x_highs) = face_candidates(&xs, m);
    let mut s1: Vec<Point3> = Vec::with_capacity(n);
    let mut s2: Vec<Point3> = Vec::with_capacity(n);
    for &x0 in &x_lows {
        for &x1 in x_highs.iter().filter(|&&x1| x1 >= x0) {
            s1.clear();
            s1.extend(by_z.iter().filter(|p| p.x >= x0 && p.x <= x1));
            if s1.len() < m {
                continue;
            }
            let ys: Vec<f64> = s1.iter().map(|p| p.y).collect();
            let (y_lows, y_highs) = face_candidates(&ys, m);
            for &y0 in &y_lows {
                for &y1 in y_highs.iter().filter(|&&y1| y1 >= y0) {
                    s2.clear();
                    s2.extend(s1.iter().filter(|p| p.y >= y0 && p.y <= y1));
                    if s2.len() < m {
                        continue;
                    }
                    // s2 is sorted by z: a z-range [s2[i].z, s2[j].z] holds
                    // exactly the points from the first index with value
                    // s2[i].z to the last with value s2[j].z.
                    let base = (x1 - x0) * (y1 - y0);
                    let k = s2.len();
                    for i in 0..=(k - m) {
                        if i > 0 && s2[i].z == s2[i - 1].z {
                            continue;
                        }
                        for j in (i + m - 1)..k {
                            if j + 1 < k && s2[j + 1].z == s2[j].z {
                                continue;
                            }
                            let count = j - i + 1;
                            let vol = base * (s2[j].z - s2[i].z);
                            let obj = cuboid_objective(vol, count);
                            let corners = [x0, y0, s2[i].z, x1, y1, s2[j].z];
                            if better(obj, count, &corners, best.as_ref()) {
                                best = Some((obj, count, corners));
                            }
                        }
                    }
                }
            }
        }
    }
    let (_, _, c) = best.expect("the bounding box is always feasible");
    Ok(Cuboid3D::new(
        Point3::new(c[0], c[1], c[2]),
        Point3::new(c[3], c[4], c[5]),
    ))
}

/// Distinct candidate lower and upper face values for one axis.
fn face_candidates(values: &[f64], required: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let slack = sorted.len() - required;
    let mut lows: Vec<f64> = sorted[..=slack].to_vec();
    lows.dedup();
    let mut highs: Vec<f64> = sorted[sorted.len() - 1 - slack..].to_vec();
    highs.dedup();
    (lows, highs)
}

fn better(
    obj: f64,
    count: usize,
    corners: &[f64; 6],
    best: Option<&(f64, usize, [f64; 6])>,
) -> bool {
    let Some((bo, bc, bcorners)) = best else {
        return true;
    };
    let scale = obj.abs().max(bo.abs());
    if obj < bo - 1e-12 * scale {
        return true;
    }
    if obj > bo + 1e-12 * scale {
        return false;
    }
    if count != *bc {
        return count > *bc;
    }
    corners
        .iter()
        .zip(bcorners)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_lt())
}

/// Flat-kernel mean shift run from every point with a tight tolerance by
/// direct summation, then merged: converged positions are ranked by their
/// neighbor count (ties by seed index) and each joins the first earlier
/// leader strictly closer than `radius / 2`. Modes are member means, ordered
/// by first appearance in that ranking.
pub fn oracle_modes(points: &[Point3], radius: f64) -> Result<Vec<Point3>> {
    Ok(oracle_mean_shift(points, radius)?.0)
}

/// Modes plus the mode index of every input point.
pub fn oracle_mean_shift(points: &[Point3], radius: f64) -> Result<(Vec<Point3>, Vec<usize>)> {
    if points.len() > ORACLE_MODES_MAX_POINTS {
        return Err(Error::invalid(format!(
            "oracle_modes is limited to {ORACLE_MODES_MAX_POINTS} points"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let r2 = radius * radius;
    let neighbors_sum = |q: &Point3| -> (Vec3, usize) {
        let mut s = Vec3::zeros();
        let mut c = 0;
        for p in points {
            if (p - q).norm_squared() <= r2 {
                s += p.coords;
                c += 1;
            }
        }
        (s, c)
    };
    let converged: Vec<Point3> = points
        .iter()
        .map(|&start| {
            let mut m = start;
            for _ in 0..10_000 {
                let (s, c) = neighbors_sum(&m);
                if c == 0 {
                    break;
                }
                let next = Point3::from(s / c as f64);
                let moved = (next - m).norm();
                m = next;
                if moved < 1e-6 {
                    break;
                }
            }
            m
        })
        .collect();

    let support: Vec<usize> = converged.iter().map(|m| neighbors_sum(m).1).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| support[b].cmp(&support[a]).then(a.cmp(&b)));
    let half2 = (radius / 2.0) * (radius / 2.0);
    let mut leaders: Vec<Point3> = Vec::new();
    let mut label = vec![0usize; points.len()];
    for &i in &order {
        let hit = leaders
            .iter()
            .position(|l| (l - converged[i]).norm_squared() < half2);
        label[i] = match hit {
            Some(g) => g,
            None => {
                leaders.push(converged[i]);
                leaders.len() - 1
            }
        };
    }
    let mut sums = vec![(Vec3::zeros(), 0usize); leaders.len()];
    for (i, &g) in label.iter().enumerate() {
        sums[g].0 += converged[i].coords;
        sums[g].1 += 1;
    }
    let modes = sums
        .iter()
        .map(|(s, c)| Point3::from(s / *c as f64))
        .collect();
    Ok((modes, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct enumeration over every subset-defining face combination, for
    /// tiny inputs only. Checks the candidate pruning above.
    fn naive(points: &[Point3], coverage: f64) -> (f64, usize) {
        let m = required_count(points.len(), coverage);
        let axis = |k: usize| -> Vec<f64> { points.iter().map(|p| p[k]).collect() };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut best = (f64::INFINITY, 0usize);
        for &x0 in &xs {
            for &x1 in &xs {
                if x1 < x0 {
                    continue;
                }
                for &y0 in &ys {
                    for &y1 in &ys {
                        if y1 < y0 {
                            continue;
                        }
                        for &z0 in &zs {
                            for &z1 in &zs {
                                if z1 < z0 {
                                    continue;
                                }
                                let c =
                                    Cuboid3D::new(Point3::new(x0, y0, z0), Point3::new(x1, y1, z1));
                                let count = c.count_inside(points);
                                if count < m {
                                    continue;
                                }
                                let obj = cuboid_objective(c.volume(), count);
                                if obj < best.0 || (obj == best.0 && count > best.1) {
                                    best = (obj, count);
                                }
                            }
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn pruned_search_matches_naive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..40 {
            let n = rng.random_range(1..9);
            let pts: Vec<Point3> = (0..n)
                .map(|_| {
                    Point3::new(
                        (rng.random_range(0..6) as f64) * 0.5,
                        (rng.random_range(0..6) as f64) * 0.25,
                        rng.random_range(0.0..1.0),
                    )
                })
                .collect();
            let cov = [0.5, 0.7, 0.9, 1.0][trial % 4];
            let c = oracle_cuboid(&pts, cov).unwrap();
            let (obj, count) = naive(&pts, cov);
            let got = cuboid_objective(c.volume(), c.count_inside(&pts));
            assert!(
                (got - obj).abs() <= 1e-12 * obj.max(1.0),
                "trial {trial}: {got} vs {obj}"
            );
            assert_eq!(c.count_inside(&pts), count);
        }
    }

    #[test]
    fn identical_points() {
        let p = Point3::new(0.5, 0.5, 0.5);
        let c = oracle_cuboid(&[p; 7], 0.9).unwrap();
        assert_eq!((c.min_corner, c.max_corner), (p, p));
    }

    #[test]
    fn full_coverage_is_aabb() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point3> = (0..60)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        assert_eq!(
            oracle_cuboid(&pts, 1.0).unwrap(),
            Cuboid3D::bounding(&pts).unwrap()
        );
    }

    #[test]
    fn size_limits() {
        assert!(oracle_cuboid(&vec![Point3::origin(); 501], 0.9).is_err());
        assert!(oracle_modes(&vec![Point3::origin(); 2001], 0.3).is_err());
    }

    #[test]
    fn modes_of_single_point_and_two_blobs() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(oracle_modes(&[p], 0.3).unwrap(), vec![p]);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts = Vec::new();
        for c in [Point3::origin(), Point3::new(0.0, 1.2, 0.0)] {
            for _ in 0..40 {
                pts.push(
                    c + Vec3::new(
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                    ),
                );
            }
        }
        let modes = oracle_modes(&pts, 0.3).unwrap();
        assert_eq!(modes.len(), 2);
        let mean =
            |s: &[Point3]| Point3::from(s.iter().map(|p| p.coords).sum::<Vec3>() / s.len() as f64);
        assert!(
            (modes[0] - mean(&pts[..40])).norm() < 0.01
                || (modes[0] - mean(&pts[40..])).norm() < 0.01
        );
        assert!(
            (modes[1] - mean(&pts[..40])).norm() < 0.01
                || (modes[1] - mean(&pts[40..])).norm() < 0.01
        );
    }
}
