//! Multi-view 3D object proposals from registered RGB-D frames.
//!
//! Stages, in pipeline order:
//!
//! * [`scale`]: metric scale from SfM/depth correspondences, frame fusion.
//! * [`planes`]: Hough plane detection and removal of the largest planes.
//! * [`meanshift`], [`cuboid`], [`proposals`]: clustering sweep, outlier-rejecting
//!   cuboid fit, pooled 3D proposals.
//! * [`annotate`]: occlusion-aware projection of 3D point sets to 2D boxes.
//! * [`eval`]: IoU, recall curves, proposal labels, average precision.
//!
//! [`synth`] renders deterministic synthetic scenes with ground truth and
//! holds brute-force reference solvers.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod camera;
pub mod cloud;
pub mod cuboid;
pub mod depth;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod meanshift;
pub mod planes;
pub mod ply;
pub mod proposals;
pub mod scale;
pub mod scene;
pub mod synth;

pub use annotate::{
    project_annotations, project_points_to_box, project_proposals, BoxesFile, FrameBox, FrameBoxes,
    FrameProposals, ObjectSegment, VisibilityParams,
};
pub use camera::{backproject_depth, project_point, Projection};
pub use cloud::{transform_cloud, PointCloud};
pub use cuboid::{fit_cuboid, Cuboid3D};
pub use depth::DepthMap;
pub use error::{Error, Result};
pub use eval::{
    average_precision, class_average, iou_2d, label_proposals, recall_report, ApReport,
    ProposalLabel, RecallReport, ScoredDetection,
};
pub use geometry::{BoundingBox2D, Intrinsics, Point3, Pose, Vec3};
pub use meanshift::{mean_shift, Cluster, MeanShiftParams};
pub use planes::{detect_planes, remove_planes, HoughParams, PlaneModel};
pub use proposals::{
    generate_proposals_multiview, generate_proposals_singleview, Proposal3D, ProposalParams,
    Provenance, SingleViewResult,
};
pub use scale::{estimate_scale, fuse_frames, DepthCorrespondence, FusionParams, ScaleEstimate};
pub use scene::CameraFrame;
