//! Occlusion-aware projection of 3D point sets into per-frame 2D boxes.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::project_point;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::eval::iou_2d;
use crate::geometry::{BoundingBox2D, Point3};
use crate::proposals::Proposal3D;
use crate::scene::CameraFrame;

/// Boxes whose 2D IoU exceeds this within one frame are collapsed.
pub const DUPLICATE_IOU: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisibilityParams {
    /// A point hides behind the measured surface only if deeper by more than this (meters).
    pub depth_tolerance: f64,
    pub min_visible_points: usize,
    /// Minimum box width and height in pixels.
    pub min_box_side: f64,
}

impl Default for VisibilityParams {
    fn default() -> Self {
        Self {
            depth_tolerance: 0.03,
            min_visible_points: 50,
            min_box_side: 10.0,
        }
    }
}

impl VisibilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_tolerance > 0.0 && self.min_box_side > 0.0) || self.min_visible_points == 0
        {
            return Err(Error::invalid("visibility parameters must be positive"));
        }
        Ok(())
    }
}

/// Labeled world-frame point set of one object instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSegment {
    pub label: String,
    pub points: PointCloud,
}

impl ObjectSegment {
    pub fn new(label: impl Into<String>, points: PointCloud) -> Result<Self> {
        let label = label.into();
        if label.is_empty() || points.is_empty() {
            return Err(Error::invalid(
                "object segment needs a label and at least one point",
            ));
        }
        Ok(Self { label, points })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBox {
    #[serde(flatten)]
    pub bbox: BoundingBox2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_index: Option<usize>,
}

/// Boxes of one frame; used for both proposals and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBoxes {
    pub id: String,
    pub boxes: Vec<FrameBox>,
}

pub type FrameProposals = FrameBoxes;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxesFile {
    pub frames: Vec<FrameBoxes>,
}

impl BoxesFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: BoxesFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        for f in &file.frames {
            for b in &f.boxes {
                b.bbox.validate()?;
            }
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("boxes serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Count of visible points and their pixel-coordinate extent.
fn visible_extent(
    points: &[Point3],
    frame: &CameraFrame,
    vis: &VisibilityParams,
) -> (usize, [f64; 4]) {
    let intr = &frame.intrinsics;
    let mut ext = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    let mut count = 0;
    for p in points {
        let Some(pr) = project_point(intr, &frame.pose, p) else {
            continue;
        };
        let Some((i, j)) = intr.pixel_at(pr.u, pr.v) else {
            continue;
        };
        if let Some(measured) = frame.depth.meters(i, j) {
            if pr.depth > measured + vis.depth_tolerance {
                continue;
            }
        }
        count += 1;
        ext[0] = ext[0].min(pr.u);
        ext[1] = ext[1].min(pr.v);
        ext[2] = ext[2].max(pr.u);
        ext[3] = ext[3].max(pr.v);
    }
    (count, ext)
}

/// Number of points of `points` visible in `frame`.
pub fn visible_point_count(
    points: &[Point3],
    frame: &CameraFrame,
    vis: &VisibilityParams,
) -> usize {
    visible_extent(points, frame, vis).0
}

/// Box around the visible projections of `points`, clipped to the image.
pub fn project_points_to_box(
    points: &[Point3],
    frame: &CameraFrame,
    vis: &VisibilityParams,
) -> Option<BoundingBox2D> {
    let (count, ext) = visible_extent(points, frame, vis);
    if count == 0 || count < vis.min_visible_points {
        return None;
    }
    let (w, h) = (
        frame.intrinsics.width as f64,
        frame.intrinsics.height as f64,
    );
    let b = BoundingBox2D {
        xmin: ext[0].clamp(0.0, w),
        ymin: ext[1].clamp(0.0, h),
        xmax: ext[2].clamp(0.0, w),
        ymax: ext[3].clamp(0.0, h),
        label: None,
    };
    (b.width() >= vis.min_box_side && b.height() >= vis.min_box_side).then_some(b)
}

fn dedupe(boxes: Vec<FrameBox>) -> Vec<FrameBox> {
    let mut kept: Vec<FrameBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        if kept
            .iter()
            .all(|k| iou_2d(&k.bbox, &b.bbox) <= DUPLICATE_IOU)
        {
            kept.push(b);
        }
    }
    kept
}

/// Projects each proposal's points into every frame; near-identical boxes
/// within a frame collapse to the first (lowest proposal index).
pub fn project_proposals(
    proposals: &[Proposal3D],
    cloud: &PointCloud,
    frames: &[CameraFrame],
    vis: &VisibilityParams,
) -> Result<Vec<FrameProposals>> {
    vis.validate()?;
    let n = cloud.len();
    if proposals
        .iter()
        .any(|p| p.point_indices.iter().any(|&i| i >= n))
    {
        return Err(Error::invalid(
            "proposal point index out of range for cloud",
        ));
    }
    let member_points: Vec<Vec<Point3>> = proposals
        .par_iter()
        .map(|p| p.point_indices.iter().map(|&i| cloud.points()[i]).collect())
        .collect();
    Ok(frames
        .par_iter()
        .map(|frame| {
            let boxes: Vec<FrameBox> = member_points
                .par_iter()
                .enumerate()
                .filter_map(|(k, pts)| {
                    project_points_to_box(pts, frame, vis).map(|bbox| FrameBox {
                        bbox,
                        proposal_index: Some(k),
                    })
                })
                .collect();
            FrameBoxes {
                id: frame.id.clone(),
                boxes: dedupe(boxes),
            }
        })
        .collect())
}

/// Labeled ground-truth boxes for every frame where a segment is visible.
pub fn project_annotations(
    segments: &[ObjectSegment],
    frames: &[CameraFrame],
    vis: &VisibilityParams,
) -> Result<Vec<FrameBoxes>> {
    vis.validate()?;
    Ok(frames
        .par_iter()
        .map(|frame| FrameBoxes {
            id: frame.id.clone(),
            boxes: segments
                .iter()
                .filter_map(|s| {
                    project_points_to_box(s.points.points(), frame, vis).map(|b| FrameBox {
                        bbox: b.with_label(s.label.clone()),
                        proposal_index: None,
                    })
                })
                .collect(),
        })
        .collect())
}
