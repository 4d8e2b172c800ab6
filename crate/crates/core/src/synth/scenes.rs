//! Ready-made scene specifications.

use crate::geometry::Intrinsics;

use super::render::{CameraSpec, SceneObject, SceneSpec, Shape, Solid, SupportPlane};

/// Kinect-like 640×480 pinhole camera.
pub fn vga_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 319.5,
        cy: 239.5,
        width: 640,
        height: 480,
    }
}

/// `count` cameras on a horizontal circle arc around `target`, all looking
/// at it. Angles in radians, counter-clockwise from +x.
pub fn orbit(
    target: [f64; 3],
    radius: f64,
    height: f64,
    count: usize,
    start: f64,
    sweep: f64,
) -> Vec<CameraSpec> {
    let step = if count > 1 && sweep.abs() < std::f64::consts::TAU - 1e-9 {
        sweep / (count - 1) as f64
    } else {
        sweep / count.max(1) as f64
    };
    (0..count)
        .map(|k| {
            let a = start + step * k as f64;
            CameraSpec::LookAt {
                eye: [
                    target[0] + radius * a.cos(),
                    target[1] + radius * a.sin(),
                    height,
                ],
                target,
                up: [0.0, 0.0, 1.0],
            }
        })
        .collect()
}

fn object(label: &str, shape: Shape, x: f64, y: f64, z: f64, yaw: f64) -> SceneObject {
    SceneObject {
        label: label.to_string(),
        solid: Solid {
            shape,
            position: [x, y, z],
            yaw,
        },
    }
}

fn cuboid(sx: f64, sy: f64, sz: f64) -> Shape {
    Shape::Box { size: [sx, sy, sz] }
}

fn can(radius: f64, height: f64) -> Shape {
    Shape::Cylinder { radius, height }
}

fn horizontal(z: f64, half: [f64; 2], center: [f64; 2]) -> SupportPlane {
    SupportPlane {
        normal: [0.0, 0.0, 1.0],
        rho: z,
        extent: half,
        offset: center,
    }
}

pub const TABLE_HEIGHT: f64 = 0.75;

/// Ten boxes and cylinders on a floor and a table top, 30 cameras orbiting.
pub fn tabletop_scene() -> SceneSpec {
    let t = TABLE_HEIGHT;
    SceneSpec {
        support_planes: vec![
            horizontal(0.0, [1.5, 1.6], [0.4, 0.0]),
            horizontal(t, [0.7, 0.45], [0.9, 0.0]),
        ],
        objects: vec![
            object("cereal_box", cuboid(0.20, 0.08, 0.30), 0.4, -0.2, t, 0.0),
            object("soup_can", can(0.05, 0.15), 0.9, 0.25, t, 0.0),
            object("cracker_box", cuboid(0.16, 0.10, 0.22), 1.4, -0.2, t, 0.0),
            object("coffee_tin", can(0.07, 0.18), -0.6, -0.8, 0.0, 0.0),
            object("shoe_box", cuboid(0.32, 0.20, 0.14), -0.6, 0.0, 0.0, 0.0),
            object("paint_bucket", can(0.12, 0.25), -0.6, 0.8, 0.0, 0.0),
            object("storage_bin", cuboid(0.40, 0.28, 0.22), 0.4, 1.1, 0.0, 0.0),
            object("water_jug", can(0.09, 0.32), 1.3, 1.1, 0.0, 0.0),
            object("tool_case", cuboid(0.36, 0.16, 0.12), 0.4, -1.1, 0.0, 0.0),
            object("trash_can", can(0.14, 0.40), 1.3, -1.1, 0.0, 0.0),
        ],
        camera_path: orbit([0.4, 0.0, 0.35], 2.8, 1.7, 30, 0.0, std::f64::consts::TAU),
        intrinsics: vga_intrinsics(),
        depth_noise_sigma: 0.005,
        occluders: Vec::new(),
        segment_spacing: 0.004,
        gt_min_pixels: 50,
        gt_min_side: 10.0,
        sfm_scale: 0.4,
        correspondences_per_frame: 50,
    }
}

/// Label of the object hidden behind the screen in [`occlusion_scene`].
pub const OCCLUDED_LABEL: &str = "hidden_box";

/// A screen hides one object from the cameras in front of it; the camera arc
/// swings round to the side so the object shows partially in some frames.
pub fn occlusion_scene() -> SceneSpec {
    SceneSpec {
        support_planes: vec![
            horizontal(0.0, [1.8, 1.8], [0.0, 0.0]),
            SupportPlane {
                normal: [1.0, 0.0, 0.0],
                rho: -1.2,
                extent: [1.8, 1.0],
                offset: [0.0, 1.0],
            },
        ],
        objects: vec![
            object(
                OCCLUDED_LABEL,
                cuboid(0.16, 0.16, 0.28),
                -0.45,
                0.0,
                0.0,
                0.0,
            ),
            object("side_can", can(0.06, 0.2), 0.3, 0.9, 0.0, 0.0),
            object("front_box", cuboid(0.24, 0.12, 0.18), 0.6, -0.8, 0.0, 0.0),
        ],
        camera_path: orbit([0.0, 0.0, 0.25], 2.6, 1.2, 24, -1.4, 2.8),
        intrinsics: vga_intrinsics(),
        depth_noise_sigma: 0.005,
        occluders: vec![Solid {
            shape: cuboid(0.12, 1.0, 0.5),
            position: [0.1, 0.0, 0.0],
            yaw: 0.0,
        }],
        segment_spacing: 0.004,
        gt_min_pixels: 50,
        gt_min_side: 10.0,
        sfm_scale: 1.0,
        correspondences_per_frame: 50,
    }
}

/// One plane filling the view of a single frontal camera.
pub fn frontal_wall_scene(distance: f64, sigma: f64) -> SceneSpec {
    SceneSpec {
        support_planes: vec![SupportPlane {
            normal: [0.0, 0.0, 1.0],
            rho: distance,
            extent: [10.0, 10.0],
            offset: [0.0, 0.0],
        }],
        objects: Vec::new(),
        camera_path: vec![CameraSpec::Pose {
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [0.0, 0.0, 0.0],
        }],
        intrinsics: vga_intrinsics(),
        depth_noise_sigma: sigma,
        occluders: Vec::new(),
        segment_spacing: 0.004,
        gt_min_pixels: 50,
        gt_min_side: 10.0,
        sfm_scale: 1.0,
        correspondences_per_frame: 50,
    }
}
