//! Object proposals: plane removal × mean-shift radius sweep, one cuboid per
//! cluster, pooled and merged by 3D overlap.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::backproject_depth;
use crate::cloud::PointCloud;
use crate::cuboid::{cuboid_objective, fit_cuboid, Cuboid3D, CuboidSearchParams};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::meanshift::{mean_shift, MeanShiftParams};
use crate::planes::{
    detect_planes, planes_to_remove, remaining_indices, HoughParams, PlaneModel,
    DEFAULT_PLANE_FRACTIONS,
};
use crate::scene::CameraFrame;

/// The sweep cell a proposal came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub plane_fraction: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal3D {
    pub cuboid: Cuboid3D,
    /// Ascending indices of the cluster points inside the cuboid.
    pub point_indices: Vec<usize>,
    pub provenance: Provenance,
}

impl Proposal3D {
    pub fn objective(&self) -> f64 {
        cuboid_objective(self.cuboid.volume(), self.point_indices.len())
    }
}

/// Serialized form of a proposal (indices are not written).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub min_corner: [f64; 3],
    pub max_corner: [f64; 3],
    pub provenance: Provenance,
    pub point_count: usize,
}

impl From<&Proposal3D> for ProposalRecord {
    fn from(p: &Proposal3D) -> Self {
        let (lo, hi) = (p.cuboid.min_corner, p.cuboid.max_corner);
        Self {
            min_corner: [lo.x, lo.y, lo.z],
            max_corner: [hi.x, hi.y, hi.z],
            provenance: p.provenance,
            point_count: p.point_indices.len(),
        }
    }
}

pub fn default_radii() -> Vec<f64> {
    (3..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalParams {
    pub radii: Vec<f64>,
    pub plane_fractions: Vec<f64>,
    pub coverage: f64,
    pub min_cluster_size: usize,
    /// Proposals overlapping a better one by more than this 3D IoU are dropped.
    pub merge_iou3d: f64,
    /// Mean shift at radius `r` runs on centroids of voxels with edge
    /// `cluster_voxel_ratio · r`, and each point joins its voxel's cluster;
    /// `0` clusters the points themselves.
    pub cluster_voxel_ratio: f64,
    pub mean_shift: MeanShiftParams,
    pub cuboid: CuboidSearchParams,
}

impl Default for ProposalParams {
    fn default() -> Self {
        Self {
            radii: default_radii(),
            plane_fractions: DEFAULT_PLANE_FRACTIONS.to_vec(),
            coverage: 0.9,
            min_cluster_size: 50,
            merge_iou3d: 0.7,
            cluster_voxel_ratio: 1.0 / 16.0,
            mean_shift: MeanShiftParams {
                max_seeds: 2000,
                ..MeanShiftParams::default()
            },
            cuboid: CuboidSearchParams::default(),
        }
    }
}

impl ProposalParams {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::invalid("radii list is empty"));
        }
        if let Some(r) = self.radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::invalid(format!("radius {r} is not positive")));
        }
        if self.plane_fractions.is_empty() {
            return Err(Error::invalid("plane_fractions list is empty"));
        }
        if let Some(f) = self
            .plane_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f <= 1.0))
        {
            return Err(Error::invalid(format!("plane fraction {f} outside (0, 1]")));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::invalid(format!(
                "coverage {} outside (0, 1]",
                self.coverage
            )));
        }
        if !(0.0..=1.0).contains(&self.merge_iou3d) {
            return Err(Error::invalid(format!(
                "merge_iou3d {} outside [0, 1]",
                self.merge_iou3d
            )));
        }
        if !(self.cluster_voxel_ratio >= 0.0 && self.cluster_voxel_ratio.is_finite()) {
            return Err(Error::invalid(format!(
                "cluster_voxel_ratio {} must be >= 0",
                self.cluster_voxel_ratio
            )));
        }
        if !(self.mean_shift.tolerance > 0.0) || self.mean_shift.max_seeds == 0 {
            return Err(Error::invalid(
                "mean-shift tolerance and max_seeds must be positive",
            ));
        }
        Ok(())
    }
}

/// Proposals for the fused world cloud with `planes` detected on it.
pub fn generate_proposals_multiview(
    cloud: &PointCloud,
    planes: &[PlaneModel],
    params: &ProposalParams,
) -> Result<Vec<Proposal3D>> {
    params.validate()?;
    let points = cloud.points();

    // Fractions that remove the same number of planes share one filtered cloud;
    // the first such fraction is recorded as provenance.
    let mut filtered: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut seen_counts = Vec::new();
    for &fraction in &params.plane_fractions {
        let removed = planes_to_remove(planes.len(), fraction);
        if seen_counts.contains(&removed) {
            continue;
        }
        seen_counts.push(removed);
        filtered.push((fraction, remaining_indices(points.len(), planes, fraction)?));
    }

    let cells: Vec<(usize, f64)> = (0..filtered.len())
        .flat_map(|f| params.radii.iter().map(move |&r| (f, r)))
        .collect();
    let per_cell: Vec<Vec<Proposal3D>> = cells
        .par_iter()
        .map(|&(f, radius)| {
            let (fraction, ref kept) = filtered[f];
            sweep_cell(points, kept, fraction, radius, params)
        })
        .collect::<Result<_>>()?;

    Ok(merge_proposals(
        per_cell.into_iter().flatten().collect(),
        params.merge_iou3d,
    ))
}

/// Voxel centroids of `points[kept]` in order of first occupancy, and the
/// voxel of each kept point as an index into them.
fn voxel_reps(points: &[Point3], kept: &[usize], size: f64) -> (Vec<Point3>, Vec<usize>) {
    if size <= 0.0 {
        return (
            kept.iter().map(|&i| points[i]).collect(),
            (0..kept.len()).collect(),
        );
    }
    let inv = 1.0 / size;
    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<(Vec3, usize)> = Vec::new();
    let rep_of = kept
        .iter()
        .map(|&i| {
            let p = points[i];
            let key = [
                (p.x * inv).floor() as i64,
                (p.y * inv).floor() as i64,
                (p.z * inv).floor() as i64,
            ];
            let r = *slot.entry(key).or_insert_with(|| {
                sums.push((Vec3::zeros(), 0));
                sums.len() - 1
            });
            sums[r].0 += p.coords;
            sums[r].1 += 1;
            r
        })
        .collect();
    let reps = sums
        .into_iter()
        .map(|(s, n)| Point3::from(s / n as f64))
        .collect();
    (reps, rep_of)
}

fn sweep_cell(
    points: &[Point3],
    kept: &[usize],
    plane_fraction: f64,
    radius: f64,
    params: &ProposalParams,
) -> Result<Vec<Proposal3D>> {
    let min_size = params.min_cluster_size.max(1);
    if kept.len() < min_size {
        return Ok(Vec::new());
    }
    let (reps, rep_of) = voxel_reps(points, kept, params.cluster_voxel_ratio * radius);
    let clusters = mean_shift(&reps, radius, &params.mean_shift)?;
    let mut cluster_of = vec![0; reps.len()];
    for (c, cl) in clusters.iter().enumerate() {
        for &r in &cl.point_indices {
            cluster_of[r] = c;
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clusters.len()];
    for (k, &r) in rep_of.iter().enumerate() {
        members[cluster_of[r]].push(kept[k]);
    }
    let provenance = Provenance {
        plane_fraction,
        radius,
    };
    Ok(members
        .par_iter()
        .filter(|m| m.len() >= min_size)
        .map(|m| {
            let pts: Vec<Point3> = m.iter().map(|&i| points[i]).collect();
            let cuboid = fit_cuboid(&pts, params.coverage, &params.cuboid);
            let point_indices = m
                .iter()
                .copied()
                .filter(|&i| cuboid.contains(&points[i]))
                .collect();
            Proposal3D {
                cuboid,
                point_indices,
                provenance,
            }
        })
        .collect())
}

/// Greedy merge: best objective first; a proposal is dropped when its 3D IoU
/// with an already kept one exceeds `max_iou`.
pub fn merge_proposals(mut proposals: Vec<Proposal3D>, max_iou: f64) -> Vec<Proposal3D> {
    let keys: Vec<f64> = proposals.iter().map(Proposal3D::objective).collect();
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .total_cmp(&keys[b])
            .then(
                proposals[b]
                    .point_indices
                    .len()
                    .cmp(&proposals[a].point_indices.len()),
            )
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let c = &proposals[i].cuboid;
        if kept.iter().all(|&k| proposals[k].cuboid.iou(c) <= max_iou) {
            kept.push(i);
        }
    }
    let mut slots: Vec<Option<Proposal3D>> = proposals.drain(..).map(Some).collect();
    kept.into_iter().filter_map(|i| slots[i].take()).collect()
}

/// Output of the single-frame pipeline, all in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleViewResult {
    /// Back-projected frame; proposal indices refer to it.
    pub cloud: PointCloud,
    pub planes: Vec<PlaneModel>,
    pub proposals: Vec<Proposal3D>,
}

/// Runs plane detection and the full sweep on one frame's own points.
pub fn generate_proposals_singleview(
    frame: &CameraFrame,
    hough: &HoughParams,
    params: &ProposalParams,
) -> Result<SingleViewResult> {
    params.validate()?;
    let cloud =
        backproject_depth(&frame.intrinsics, &frame.depth)?.with_source_frame(frame.id.clone());
    let planes = if cloud.is_empty() {
        Vec::new()
    } else {
        detect_planes(&cloud, hough)?
    };
    let proposals = generate_proposals_multiview(&cloud, &planes, params)?;
    Ok(SingleViewResult {
        cloud,
        planes,
        proposals,
    })
}
