//! Axis-aligned cuboid fitting by pattern search.
//!
//! The cuboid is parameterized by its center and its extent along each
//! axis. Starting from the cluster's bounding box, the search minimizes
//! `volume / included points` while keeping at least `ceil(coverage · n)`
//! points inside. No rotation is searched.

use serde::{Deserialize, Serialize};

use crate::cloud::aabb;
use crate::geometry::{Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid3D {
    pub min_corner: Point3,
    pub max_corner: Point3,
}

impl Cuboid3D {
    pub fn new(min_corner: Point3, max_corner: Point3) -> Self {
        debug_assert!((0..3).all(|k| min_corner[k] <= max_corner[k]));
        Self {
            min_corner,
            max_corner,
        }
    }

    /// Bounding box of `points`; `None` if empty.
    pub fn bounding(points: &[Point3]) -> Option<Self> {
        aabb(points).map(|(lo, hi)| Self::new(lo, hi))
    }

    pub fn extent(&self) -> Vec3 {
        self.max_corner - self.min_corner
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x.max(0.0) * e.y.max(0.0) * e.z.max(0.0)
    }

    /// Closed containment.
    #[inline]
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min_corner[k] && p[k] <= self.max_corner[k])
    }

    pub fn count_inside(&self, points: &[Point3]) -> usize {
        points.iter().filter(|p| self.contains(p)).count()
    }

    pub fn corners(&self) -> [Point3; 8] {
        let (a, b) = (self.min_corner, self.max_corner);
        [
            Point3::new(a.x, a.y, a.z),
            Point3::new(b.x, a.y, a.z),
            Point3::new(a.x, b.y, a.z),
            Point3::new(b.x, b.y, a.z),
            Point3::new(a.x, a.y, b.z),
            Point3::new(b.x, a.y, b.z),
            Point3::new(a.x, b.y, b.z),
            Point3::new(b.x, b.y, b.z),
        ]
    }

    pub fn intersection_volume(&self, other: &Cuboid3D) -> f64 {
        let mut v = 1.0;
        for k in 0..3 {
            let d = self.max_corner[k].min(other.max_corner[k])
                - self.min_corner[k].max(other.min_corner[k]);
            if d <= 0.0 {
                return 0.0;
            }
            v *= d;
        }
        v
    }

    /// Volumetric intersection over union; 0 when the union has no volume.
    pub fn iou(&self, other: &Cuboid3D) -> f64 {
        let inter = self.intersection_volume(other);
        let union = self.volume() + other.volume() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// `volume / count`, the quantity minimized by the fit. Infinite for empty boxes.
pub fn cuboid_objective(volume: f64, count: usize) -> f64 {
    if count == 0 {
        f64::INFINITY
    } else {
        volume / count as f64
    }
}

/// Points that must stay inside for `coverage` of `n`.
pub fn required_count(n: usize, coverage: f64) -> usize {
    // Guard against 0.9 · 100 = 90.00000000000001.
    let m = (coverage * n as f64 - 1e-9).ceil();
    (m.max(1.0) as usize).min(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuboidSearchParams {
    /// Initial step as a fraction of each bounding-box extent.
    pub initial_step: f64,
    /// Search stops once every step is below this (meters).
    pub min_step: f64,
    /// Clusters larger than this are searched on an evenly strided subsample.
    pub sample_limit: usize,
    /// Face positions per side in the coarse global lattice (0 disables it).
    pub lattice_levels: usize,
    /// Lattice boxes refined by the face search.
    pub lattice_keep: usize,
    /// Neighboring face positions tried per side in two-axis moves.
    pub pair_window: usize,
    /// Below this many points two-axis moves consider every face position.
    pub exhaustive_pairs_below: usize,
    /// Face positions per side for three-axis moves on small clusters.
    pub triple_window: usize,
}

impl Default for CuboidSearchParams {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            min_step: 1e-4,
            sample_limit: 1024,
            lattice_levels: 5,
            lattice_keep: 8,
            pair_window: 2,
            exhaustive_pairs_below: 250,
            triple_window: 2,
        }
    }
}

const OBJECTIVE_TIE: f64 = 1e-9;

/// A search state: the box as its two corners plus its score.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    lo: Vec3,
    hi: Vec3,
    objective: f64,
    count: usize,
}

impl Candidate {
    fn cuboid(&self) -> Cuboid3D {
        Cuboid3D::new(Point3::from(self.lo), Point3::from(self.hi))
    }

    /// Strictly better objective, or a tie with more points.
    fn beats(&self, other: &Candidate) -> bool {
        let scale = self.objective.abs().max(other.objective.abs());
        if self.objective < other.objective - OBJECTIVE_TIE * scale {
            return true;
        }
        (self.objective - other.objective).abs() <= OBJECTIVE_TIE * scale
            && self.count > other.count
    }
}

struct Evaluator<'a> {
    points: &'a [Point3],
    required: usize,
}

impl Evaluator<'_> {
    fn eval(&self, lo: Vec3, hi: Vec3) -> Option<Candidate> {
        if (0..3).any(|k| hi[k] < lo[k]) {
            return None;
        }
        let cub = Cuboid3D::new(Point3::from(lo), Point3::from(hi));
        let count = cub.count_inside(self.points);
        if count < self.required {
            return None;
        }
        Some(Candidate {
            lo,
            hi,
            objective: cuboid_objective(cub.volume(), count),
            count,
        })
    }
}

/// Fits the cuboid for the cluster members `points` (all of them, not indices).
pub fn fit_cuboid(points: &[Point3], coverage: f64, params: &CuboidSearchParams) -> Cuboid3D {
    let Some(full) = Cuboid3D::bounding(points) else {
        return Cuboid3D::new(Point3::origin(), Point3::origin());
    };
    let coverage = coverage.clamp(f64::MIN_POSITIVE, 1.0);
    let required = required_count(points.len(), coverage);
    if required == points.len() {
        return full;
    }

    let sample: Vec<Point3>;
    let search_points = if points.len() > params.sample_limit {
        let stride = points.len().div_ceil(params.sample_limit);
        sample = points.iter().step_by(stride).copied().collect();
        &sample[..]
    } else {
        points
    };
    let eval = Evaluator {
        points: search_points,
        required: required_count(search_points.len(), coverage),
    };
    // Small clusters afford unrestricted two-axis moves and three-axis moves.
    let (window, triple_window) = if search_points.len() <= params.exhaustive_pairs_below {
        (usize::MAX / 4, params.triple_window)
    } else {
        (params.pair_window, 0)
    };
    let mut starts = vec![pattern_search(&eval, &full, params)];
    starts.extend(trim_lattice(&eval, params));
    let local = starts
        .into_iter()
        .map(|c| face_search(&eval, c, window, triple_window))
        .reduce(|best, c| if c.beats(&best) { c } else { best })
        .expect("at least one start");
    let fitted = release_and_search(&eval, local, &full, window, triple_window).cuboid();

    if search_points.len() == points.len() {
        return fitted;
    }
    // The subsample fit may cover slightly less of the full cluster; grow it
    // about its center until the coverage holds.
    let center = (fitted.min_corner.coords + fitted.max_corner.coords) * 0.5;
    let base = fitted.extent();
    let mut factor = 1.0;
    let mut grown = fitted;
    while grown.count_inside(points) < required {
        factor *= 1.05;
        if factor > 1e3 {
            return full;
        }
        let half = base * (0.5 * factor);
        let lo = (center - half).zip_map(&full.min_corner.coords, f64::max);
        let hi = (center + half).zip_map(&full.max_corner.coords, f64::min);
        grown = Cuboid3D::new(Point3::from(lo), Point3::from(hi));
    }
    grown
}

/// Generalized pattern search over center shifts and extent changes (plus
/// single-face moves, which are their half-sums), with step halving.
fn pattern_search(eval: &Evaluator, full: &Cuboid3D, params: &CuboidSearchParams) -> Candidate {
    let mut best = eval
        .eval(full.min_corner.coords, full.max_corner.coords)
        .expect("the bounding box holds every point");
    let mut step = full.extent() * params.initial_step;

    while step.max() >= params.min_step {
        let mut poll_best: Option<Candidate> = None;
        for k in 0..3 {
            let s = step[k];
            if s <= 0.0 {
                continue;
            }
            // (lower-face move, upper-face move)
            let moves: [(f64, f64); 8] = [
                (s, s),
                (-s, -s),
                (-0.5 * s, 0.5 * s),
                (0.5 * s, -0.5 * s),
                (s, 0.0),
                (0.0, -s),
                (-s, 0.0),
                (0.0, s),
            ];
            for (dlo, dhi) in moves {
                let (mut lo, mut hi) = (best.lo, best.hi);
                lo[k] += dlo;
                hi[k] += dhi;
                if let Some(c) = eval.eval(lo, hi) {
                    if poll_best.as_ref().is_none_or(|b| c.beats(b)) {
                        poll_best = Some(c);
                    }
                }
            }
        }
        match poll_best {
            Some(c) if c.beats(&best) => best = c,
            _ => step *= 0.5,
        }
    }
    best
}

/// Coarse global poll: every face is placed at one of a few evenly spaced
/// order statistics among the points it may cut away. The best few feasible
/// lattice boxes become extra starting points for the face search.
fn trim_lattice(eval: &Evaluator, params: &CuboidSearchParams) -> Vec<Candidate> {
    let n = eval.points.len();
    let slack = n - eval.required;
    if slack == 0 || params.lattice_levels < 2 {
        return Vec::new();
    }
    let levels = params.lattice_levels.min(slack + 1);
    let trims: Vec<usize> = (0..levels)
        .map(|i| (i * slack + (levels - 1) / 2) / (levels - 1))
        .collect();
    let sorted: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let mut v: Vec<f64> = eval.points.iter().map(|p| p[k]).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let faces = |k: usize| -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &a in &trims {
            for &b in &trims {
                if a + b <= slack {
                    out.push((sorted[k][a], sorted[k][n - 1 - b]));
                }
            }
        }
        out
    };
    let (fx, fy, fz) = (faces(0), faces(1), faces(2));
    let mut kept: Vec<Candidate> = Vec::new();
    for &(x0, x1) in &fx {
        for &(y0, y1) in &fy {
            for &(z0, z1) in &fz {
                let Some(c) = eval.eval(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1)) else {
                    continue;
                };
                if kept.len() < params.lattice_keep {
                    kept.push(c);
                } else if let Some(w) = worst_index(&kept).filter(|&w| c.beats(&kept[w])) {
                    kept[w] = c;
                }
            }
        }
    }
    kept
}

fn worst_index(list: &[Candidate]) -> Option<usize> {
    (0..list.len()).reduce(|w, i| if list[w].beats(&list[i]) { i } else { w })
}

/// Restarts the face search after releasing the trimmed points behind every
/// single face and every pair of faces (moving them out to the bounding
/// box), so the trimming can be re-distributed across axes.
fn release_and_search(
    eval: &Evaluator,
    start: Candidate,
    full: &Cuboid3D,
    window: usize,
    triple_window: usize,
) -> Candidate {
    let mut best = start;
    let mut tried: Vec<u8> = Vec::new();
    for first in 0..6u8 {
        for second in first..6u8 {
            let mask = (1 << first) | (1 << second);
            if tried.contains(&mask) {
                continue;
            }
            tried.push(mask);
            let (mut lo, mut hi) = (best.lo, best.hi);
            for face in 0..6 {
                if mask & (1 << face) != 0 {
                    let k = (face / 2) as usize;
                    if face % 2 == 0 {
                        lo[k] = full.min_corner[k];
                    } else {
                        hi[k] = full.max_corner[k];
                    }
                }
            }
            if lo == best.lo && hi == best.hi {
                continue;
            }
            let Some(released) = eval.eval(lo, hi) else {
                continue;
            };
            let c = face_search(eval, released, window, triple_window);
            if c.beats(&best) {
                best = c;
            }
        }
    }
    best
}

/// Coordinate search on the face positions. A move re-places the faces of
/// one axis, or of two axes jointly, at point coordinates with the remaining
/// faces held fixed; every placement in the (windowed) neighborhood is
/// tried. Cycles until no move improves.
fn face_search(
    eval: &Evaluator,
    start: Candidate,
    window: usize,
    triple_window: usize,
) -> Candidate {
    const MOVES: [(usize, Option<usize>); 6] = [
        (0, None),
        (1, None),
        (2, None),
        (0, Some(1)),
        (1, Some(2)),
        (0, Some(2)),
    ];
    let mut best = start;
    // Steepest descent over all moves; each step strictly improves, the cap
    // only bounds plateaus.
    for _ in 0..100 {
        let triples = (0..3)
            .filter(|_| triple_window > 0)
            .filter_map(|c| best_near(eval, &best, c, triple_window));
        let step = MOVES
            .iter()
            .filter_map(|&(a, b)| match b {
                None => best_on_axis(eval, &best, a),
                Some(b) => best_on_axes(eval, &best, a, b, window),
            })
            .chain(triples)
            .reduce(|x, y| if y.beats(&x) { y } else { x });
        match step {
            Some(c) if c.beats(&best) => best = c,
            _ => break,
        }
    }
    best
}

/// Best joint placement of the faces on axes `a` and `b`: the `a` faces range
/// over nearby point coordinates, the `b` faces are then placed exactly.
fn best_on_axes(
    eval: &Evaluator,
    cur: &Candidate,
    a: usize,
    b: usize,
    window: usize,
) -> Option<Candidate> {
    let c = 3 - a - b;
    let mut slab: Vec<Point3> = eval
        .points
        .iter()
        .filter(|p| p[c] >= cur.lo[c] && p[c] <= cur.hi[c])
        .copied()
        .collect();
    let m = eval.required;
    if slab.len() < m {
        return None;
    }
    slab.sort_by(|p, q| p[b].total_cmp(&q[b]));
    let mut vals: Vec<f64> = slab.iter().map(|p| p[a]).collect();
    vals.sort_by(f64::total_cmp);
    let slack = slab.len() - m;
    let mut lows: Vec<f64> = vals[..=slack].to_vec();
    lows.dedup();
    let mut highs: Vec<f64> = vals[vals.len() - 1 - slack..].to_vec();
    highs.dedup();
    let near = |list: Vec<f64>, at: f64| -> Vec<f64> {
        let pos = list.partition_point(|&v| v < at);
        let from = pos.saturating_sub(window);
        let to = (pos + window + 1).min(list.len());
        list[from..to].to_vec()
    };
    let lows = near(lows, cur.lo[a]);
    let highs = near(highs, cur.hi[a]);

    let extent_c = cur.hi[c] - cur.lo[c];
    let mut best: Option<Candidate> = None;
    let mut column: Vec<f64> = Vec::with_capacity(slab.len());
    for &a0 in &lows {
        for &a1 in highs.iter().filter(|&&v| v >= a0) {
            column.clear();
            column.extend(
                slab.iter()
                    .filter(|p| p[a] >= a0 && p[a] <= a1)
                    .map(|p| p[b]),
            );
            let area = (a1 - a0) * extent_c;
            let mut lo = cur.lo;
            let mut hi = cur.hi;
            lo[a] = a0;
            hi[a] = a1;
            if let Some(cand) = best_interval(&column, m, area, lo, hi, b) {
                if best.as_ref().is_none_or(|bb| cand.beats(bb)) {
                    best = Some(cand);
                }
            }
        }
    }
    best
}

/// Best placement with the faces of the two axes other than `exact` moved by
/// at most `window` positions each and the `exact` faces placed optimally.
fn best_near(eval: &Evaluator, cur: &Candidate, exact: usize, window: usize) -> Option<Candidate> {
    let (a, b) = ((exact + 1) % 3, (exact + 2) % 3);
    let mut pts: Vec<Point3> = eval.points.to_vec();
    pts.sort_by(|p, q| p[exact].total_cmp(&q[exact]));
    let options = |k: usize| -> (Vec<f64>, Vec<f64>) {
        let mut v: Vec<f64> = pts.iter().map(|p| p[k]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        let around = |at: f64| {
            let pos = v.partition_point(|&x| x < at);
            v[pos.saturating_sub(window)..(pos + window + 1).min(v.len())].to_vec()
        };
        (around(cur.lo[k]), around(cur.hi[k]))
    };
    let (a_lo, a_hi) = options(a);
    let (b_lo, b_hi) = options(b);
    let m = eval.required;
    let mut best: Option<Candidate> = None;
    let mut column = Vec::with_capacity(pts.len());
    for &a0 in &a_lo {
        for &a1 in a_hi.iter().filter(|&&v| v >= a0) {
            for &b0 in &b_lo {
                for &b1 in b_hi.iter().filter(|&&v| v >= b0) {
                    column.clear();
                    column.extend(
                        pts.iter()
                            .filter(|p| p[a] >= a0 && p[a] <= a1 && p[b] >= b0 && p[b] <= b1)
                            .map(|p| p[exact]),
                    );
                    let (mut lo, mut hi) = (cur.lo, cur.hi);
                    lo[a] = a0;
                    hi[a] = a1;
                    lo[b] = b0;
                    hi[b] = b1;
                    let area = (a1 - a0) * (b1 - b0);
                    if let Some(c) = best_interval(&column, m, area, lo, hi, exact) {
                        if best.as_ref().is_none_or(|bb| c.beats(bb)) {
                            best = Some(c);
                        }
                    }
                }
            }
        }
    }
    best
}

/// Exact best `[values[i], values[j]]` along `axis` for ascending `values`.
fn best_interval(
    values: &[f64],
    m: usize,
    area: f64,
    lo: Vec3,
    hi: Vec3,
    axis: usize,
) -> Option<Candidate> {
    let k = values.len();
    if k < m {
        return None;
    }
    let mut best: Option<Candidate> = None;
    for i in 0..=(k - m) {
        if i > 0 && values[i] == values[i - 1] {
            continue;
        }
        for j in (i + m - 1)..k {
            if j + 1 < k && values[j + 1] == values[j] {
                continue;
            }
            let count = j - i + 1;
            let (mut lo, mut hi) = (lo, hi);
            lo[axis] = values[i];
            hi[axis] = values[j];
            let c = Candidate {
                lo,
                hi,
                objective: cuboid_objective(area * (values[j] - values[i]), count),
                count,
            };
            if best.as_ref().is_none_or(|bb| c.beats(bb)) {
                best = Some(c);
            }
        }
    }
    best
}

fn best_on_axis(eval: &Evaluator, cur: &Candidate, axis: usize) -> Option<Candidate> {
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut slab: Vec<f64> = eval
        .points
        .iter()
        .filter(|p| {
            p[a] >= cur.lo[a] && p[a] <= cur.hi[a] && p[b] >= cur.lo[b] && p[b] <= cur.hi[b]
        })
        .map(|p| p[axis])
        .collect();
    slab.sort_by(f64::total_cmp);
    let area = (cur.hi[a] - cur.lo[a]) * (cur.hi[b] - cur.lo[b]);
    best_interval(&slab, eval.required, area, cur.lo, cur.hi, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coincident_points_give_point_cuboid() {
        let p = Point3::new(1.0, 2.0, 3.0);
        let c = fit_cuboid(&vec![p; 10], 0.9, &CuboidSearchParams::default());
        assert_eq!(c.min_corner, p);
        assert_eq!(c.max_corner, p);
    }

    #[test]
    fn required_count_is_robust_to_rounding() {
        assert_eq!(required_count(100, 0.9), 90);
        assert_eq!(required_count(105, 0.9), 95);
        assert_eq!(required_count(1, 0.9), 1);
        assert_eq!(required_count(7, 1.0), 7);
    }

    #[test]
    fn full_coverage_is_the_bounding_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3> = (0..50)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let c = fit_cuboid(&pts, 1.0, &CuboidSearchParams::default());
        assert_eq!(c, Cuboid3D::bounding(&pts).unwrap());
    }

    #[test]
    fn rejects_far_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pts: Vec<Point3> = (0..100)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        for k in 0..5 {
            pts.push(Point3::new(10.0 + k as f64, -10.0, 10.0));
        }
        let c = fit_cuboid(&pts, 0.9, &CuboidSearchParams::default());
        assert!(pts[100..].iter().all(|p| !c.contains(p)));
        assert!(c.count_inside(&pts) >= 95);
        assert!(c.volume() <= 1.0);
    }

    #[test]
    fn large_clusters_keep_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..20_000)
            .map(|_| Point3::new(rng.random(), rng.random::<f64>() * 0.3, rng.random()))
            .collect();
        let c = fit_cuboid(&pts, 0.9, &CuboidSearchParams::default());
        assert!(c.count_inside(&pts) >= 18_000);
    }

    #[test]
    fn iou_3d() {
        let a = Cuboid3D::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0));
        let b = Cuboid3D::new(Point3::new(0.5, 0.0, 0.0), Point3::new(1.5, 1.0, 1.0));
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
        let p = Cuboid3D::new(Point3::origin(), Point3::origin());
        assert_eq!(p.iou(&p), 0.0);
    }
}
