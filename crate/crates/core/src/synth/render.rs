//! Ray-cast depth rendering of plane patches, boxes and cylinders.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{BoxesFile, FrameBox, FrameBoxes, ObjectSegment};
use crate::camera::backproject_pixel;
use crate::cloud::PointCloud;
use crate::cuboid::Cuboid3D;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox2D, Intrinsics, Point3, Pose, Vec3};
use crate::ply::save_cloud;
use crate::scene::{CameraFrame, FrameEntry, SceneFile};

/// Rectangular patch of the plane `normal · p = rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPlane {
    pub normal: [f64; 3],
    pub rho: f64,
    /// Half sizes along the patch axes (meters).
    pub extent: [f64; 2],
    /// Patch center offset from `rho · normal` along the patch axes.
    #[serde(default)]
    pub offset: [f64; 2],
}

impl SupportPlane {
    fn unit_normal(&self) -> Vec3 {
        Vec3::from(self.normal).normalize()
    }

    /// In-plane axes: `u` is the x axis projected into the plane (y if the
    /// plane is nearly perpendicular to x), `v = n × u`.
    pub fn axes(&self) -> (Vec3, Vec3) {
        let n = self.unit_normal();
        let seed = if n.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let u = (seed - n * n.dot(&seed)).normalize();
        (u, n.cross(&u))
    }

    pub fn center(&self) -> Point3 {
        let (u, v) = self.axes();
        Point3::from(self.unit_normal() * self.rho + u * self.offset[0] + v * self.offset[1])
    }

    fn intersect(&self, o: &Point3, d: &Vec3) -> Option<f64> {
        let n = self.unit_normal();
        let nd = n.dot(d);
        if nd.abs() < 1e-12 {
            return None;
        }
        let t = (self.rho - n.dot(&o.coords)) / nd;
        if t <= 0.0 {
            return None;
        }
        let rel = o + d * t - self.center();
        let (u, v) = self.axes();
        (rel.dot(&u).abs() <= self.extent[0] && rel.dot(&v).abs() <= self.extent[1]).then_some(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    /// Full side lengths along the object's local x, y, z.
    Box { size: [f64; 3] },
    /// Vertical cylinder.
    Cylinder { radius: f64, height: f64 },
}

/// A solid standing on `position` (center of its base), turned by `yaw`
/// radians about the world z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solid {
    pub shape: Shape,
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

impl Solid {
    fn validate(&self) -> Result<()> {
        let ok = match self.shape {
            Shape::Box { size } => size.iter().all(|s| *s > 0.0 && s.is_finite()),
            Shape::Cylinder { radius, height } => {
                radius > 0.0 && height > 0.0 && radius.is_finite() && height.is_finite()
            }
        };
        if ok && self.position.iter().all(|v| v.is_finite()) && self.yaw.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("object sizes must be positive and finite"))
        }
    }

    fn to_local(&self, p: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * p.x + s * p.y, -s * p.x + c * p.y, p.z)
    }

    fn to_world(&self, q: &Vec3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(
            c * q.x - s * q.y + self.position[0],
            s * q.x + c * q.y + self.position[1],
            q.z + self.position[2],
        )
    }

    fn intersect(&self, o: &Point3, d: &Vec3) -> Option<f64> {
        let lo = self.to_local(&(o.coords - Vec3::from(self.position)));
        let ld = self.to_local(d);
        match self.shape {
            Shape::Box { size } => {
                let half = [size[0] / 2.0, size[1] / 2.0];
                let bounds = [(-half[0], half[0]), (-half[1], half[1]), (0.0, size[2])];
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let (a, b) = bounds[k];
                    if ld[k].abs() < 1e-15 {
                        if lo[k] < a || lo[k] > b {
                            return None;
                        }
                        continue;
                    }
                    let (mut ta, mut tb) = ((a - lo[k]) / ld[k], (b - lo[k]) / ld[k]);
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    t0 = t0.max(ta);
                    t1 = t1.min(tb);
                }
                (t0 <= t1 && t0 > 0.0).then_some(t0)
            }
            Shape::Cylinder { radius, height } => {
                let mut best: Option<f64> = None;
                let mut take = |t: f64| {
                    if t > 0.0 && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = ld.x * ld.x + ld.y * ld.y;
                if a > 1e-15 {
                    let b = 2.0 * (lo.x * ld.x + lo.y * ld.y);
                    let c = lo.x * lo.x + lo.y * lo.y - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = lo.z + t * ld.z;
                            if (0.0..=height).contains(&z) {
                                take(t);
                            }
                        }
                    }
                }
                if ld.z.abs() > 1e-15 {
                    for zc in [0.0, height] {
                        let t = (zc - lo.z) / ld.z;
                        let (x, y) = (lo.x + t * ld.x, lo.y + t * ld.y);
                        if x * x + y * y <= radius * radius {
                            take(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// Points on the whole surface, spaced about `spacing` apart, edges included.
    pub fn surface_points(&self, spacing: f64) -> Vec<Point3> {
        let steps = |len: f64| ((len / spacing).ceil() as usize).max(1);
        let mut local = Vec::new();
        match self.shape {
            Shape::Box { size } => {
                let lo = [-size[0] / 2.0, -size[1] / 2.0, 0.0];
                for axis in 0..3 {
                    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                    let (na, nb) = (steps(size[a]), steps(size[b]));
                    for side in [0.0, size[axis]] {
                        for i in 0..=na {
                            for j in 0..=nb {
                                let mut q = Vec3::new(lo[0], lo[1], lo[2]);
                                q[axis] += side;
                                q[a] += size[a] * i as f64 / na as f64;
                                q[b] += size[b] * j as f64 / nb as f64;
                                local.push(q);
                            }
                        }
                    }
                }
            }
            Shape::Cylinder { radius, height } => {
                let around = steps(std::f64::consts::TAU * radius).max(8);
                let up = steps(height);
                for i in 0..around {
                    let a = std::f64::consts::TAU * i as f64 / around as f64;
                    for j in 0..=up {
                        local.push(Vec3::new(
                            radius * a.cos(),
                            radius * a.sin(),
                            height * j as f64 / up as f64,
                        ));
                    }
                }
                let rings = steps(radius);
                for z in [0.0, height] {
                    local.push(Vec3::new(0.0, 0.0, z));
                    for r in 1..=rings {
                        let rr = radius * r as f64 / rings as f64;
                        let m = steps(std::f64::consts::TAU * rr).max(6);
                        for i in 0..m {
                            let a = std::f64::consts::TAU * i as f64 / m as f64;
                            local.push(Vec3::new(rr * a.cos(), rr * a.sin(), z));
                        }
                    }
                }
            }
        }
        local.iter().map(|q| self.to_world(q)).collect()
    }

    /// Axis-aligned world box enclosing the solid.
    pub fn aabb(&self) -> Cuboid3D {
        let pts = match self.shape {
            Shape::Box { size } => {
                let mut c = Vec::with_capacity(8);
                for k in 0..8 {
                    c.push(self.to_world(&Vec3::new(
                        if k & 1 == 0 {
                            -size[0] / 2.0
                        } else {
                            size[0] / 2.0
                        },
                        if k & 2 == 0 {
                            -size[1] / 2.0
                        } else {
                            size[1] / 2.0
                        },
                        if k & 4 == 0 { 0.0 } else { size[2] },
                    )));
                }
                c
            }
            Shape::Cylinder { radius, height } => {
                let p = self.position;
                vec![
                    Point3::new(p[0] - radius, p[1] - radius, p[2]),
                    Point3::new(p[0] + radius, p[1] + radius, p[2] + height),
                ]
            }
        };
        Cuboid3D::bounding(&pts).expect("nonempty corner set")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    #[serde(flatten)]
    pub solid: Solid,
}

/// Camera placement: explicit camera-to-world pose, or a look-at triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CameraSpec {
    Pose {
        rotation: [f64; 9],
        translation: [f64; 3],
    },
    LookAt {
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
    },
}

impl CameraSpec {
    pub fn pose(&self) -> Result<Pose> {
        match self {
            CameraSpec::Pose {
                rotation,
                translation,
            } => Pose::from_arrays(rotation, translation),
            CameraSpec::LookAt { eye, target, up } => {
                Pose::look_at(Point3::from(*eye), Point3::from(*target), Vec3::from(*up))
            }
        }
    }
}

fn default_spacing() -> f64 {
    0.004
}
fn default_min_pixels() -> usize {
    50
}
fn default_min_side() -> f64 {
    10.0
}
fn default_sfm_scale() -> f64 {
    1.0
}
fn default_corr_per_frame() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub support_planes: Vec<SupportPlane>,
    pub objects: Vec<SceneObject>,
    pub camera_path: Vec<CameraSpec>,
    pub intrinsics: Intrinsics,
    pub depth_noise_sigma: f64,
    /// Unlabeled solids that only block the view.
    #[serde(default)]
    pub occluders: Vec<Solid>,
    /// Surface sampling distance of object segments (meters).
    #[serde(default = "default_spacing")]
    pub segment_spacing: f64,
    /// Visible pixels an object needs for a ground-truth box.
    #[serde(default = "default_min_pixels")]
    pub gt_min_pixels: usize,
    #[serde(default = "default_min_side")]
    pub gt_min_side: f64,
    /// Meters per reconstruction unit used for the written poses.
    #[serde(default = "default_sfm_scale")]
    pub sfm_scale: f64,
    #[serde(default = "default_corr_per_frame")]
    pub correspondences_per_frame: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.camera_path.is_empty() {
            return Err(Error::invalid("scene needs at least one camera"));
        }
        for obj in &self.objects {
            if obj.label.is_empty() {
                return Err(Error::invalid("object label is empty"));
            }
            obj.solid.validate()?;
        }
        for o in &self.occluders {
            o.validate()?;
        }
        for p in &self.support_planes {
            let n = Vec3::from(p.normal).norm();
            if !(n > 1e-9 && n.is_finite()) || !(p.extent[0] > 0.0 && p.extent[1] > 0.0) {
                return Err(Error::invalid(
                    "support plane needs a nonzero normal and positive extent",
                ));
            }
        }
        if !(self.depth_noise_sigma >= 0.0 && self.depth_noise_sigma.is_finite()) {
            return Err(Error::invalid("depth noise sigma must be non-negative"));
        }
        if !(self.segment_spacing > 0.0 && self.sfm_scale > 0.0 && self.sfm_scale.is_finite()) {
            return Err(Error::invalid(
                "segment spacing and sfm scale must be positive",
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SceneSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// What a pixel sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Surface {
    Nothing,
    Plane(usize),
    Object(usize),
    Occluder(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub frame: CameraFrame,
    /// Row-major surface under each pixel (before depth validity).
    pub surfaces: Vec<Surface>,
    /// Visible pixel count per object.
    pub visible_pixels: Vec<usize>,
    pub gt: FrameBoxes,
}

impl RenderedFrame {
    /// Surface of each back-projected point, in `backproject_depth` order.
    pub fn point_surfaces(&self) -> Vec<Surface> {
        self.frame
            .depth
            .values()
            .iter()
            .zip(&self.surfaces)
            .filter(|(d, _)| **d > 0)
            .map(|(_, s)| *s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub frames: Vec<RenderedFrame>,
    pub segments: Vec<ObjectSegment>,
    /// Axis-aligned world box of every object.
    pub object_boxes: Vec<Cuboid3D>,
    pub sfm_scale: f64,
    pub seed: u64,
}

impl SceneTruth {
    pub fn camera_frames(&self) -> Vec<CameraFrame> {
        self.frames.iter().map(|f| f.frame.clone()).collect()
    }

    pub fn ground_truth(&self) -> Vec<FrameBoxes> {
        self.frames.iter().map(|f| f.gt.clone()).collect()
    }
}

pub fn frame_id(k: usize) -> String {
    format!("frame_{k:04}")
}

/// Renders every camera of `spec`. Noise for frame `k` comes from stream `k`
/// of a generator seeded with `seed`, so frames render independently.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<SceneTruth> {
    spec.validate()?;
    let poses: Vec<Pose> = spec
        .camera_path
        .iter()
        .map(CameraSpec::pose)
        .collect::<Result<_>>()?;
    let frames = poses
        .par_iter()
        .enumerate()
        .map(|(k, pose)| render_frame(spec, k, pose, seed))
        .collect::<Result<Vec<_>>>()?;
    let segments = spec
        .objects
        .iter()
        .map(|o| {
            let cloud = PointCloud::new(o.solid.surface_points(spec.segment_spacing))?;
            ObjectSegment::new(o.label.clone(), cloud)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneTruth {
        frames,
        segments,
        object_boxes: spec.objects.iter().map(|o| o.solid.aabb()).collect(),
        sfm_scale: spec.sfm_scale,
        seed,
    })
}

/// Nearest hit along `origin + t·dir` and the surface hit.
fn cast(spec: &SceneSpec, origin: &Point3, dir: &Vec3) -> (f64, Surface) {
    let mut best = (f64::INFINITY, Surface::Nothing);
    let mut consider = |t: Option<f64>, s: Surface| {
        if let Some(t) = t {
            if t < best.0 {
                best = (t, s);
            }
        }
    };
    for (i, p) in spec.support_planes.iter().enumerate() {
        consider(p.intersect(origin, dir), Surface::Plane(i));
    }
    for (i, o) in spec.objects.iter().enumerate() {
        consider(o.solid.intersect(origin, dir), Surface::Object(i));
    }
    for (i, o) in spec.occluders.iter().enumerate() {
        consider(o.intersect(origin, dir), Surface::Occluder(i));
    }
    best
}

fn render_frame(spec: &SceneSpec, k: usize, pose: &Pose, seed: u64) -> Result<RenderedFrame> {
    let intr = spec.intrinsics;
    let (w, h) = (intr.width as usize, intr.height as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let noise =
        Normal::new(0.0, spec.depth_noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let origin = Point3::from(*pose.translation());
    let rot = *pose.rotation();

    let mut values = vec![0u16; w * h];
    let mut surfaces = vec![Surface::Nothing; w * h];
    let mut visible_pixels = vec![0usize; spec.objects.len()];
    let mut extents = vec![[usize::MAX, usize::MAX, 0usize, 0usize]; spec.objects.len()];
    for v in 0..h {
        for u in 0..w {
            // Camera-frame ray with unit z, so the hit parameter is the depth.
            let dir_cam = backproject_pixel(&intr, u as f64, v as f64, 1.0).coords;
            let dir = rot * dir_cam;
            let best = cast(spec, &origin, &dir);
            // One draw per pixel keeps the stream aligned regardless of hits.
            let eps: f64 = if spec.depth_noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            let idx = v * w + u;
            surfaces[idx] = best.1;
            if best.1 == Surface::Nothing {
                continue;
            }
            let mm = ((best.0 + eps) * 1000.0).round();
            if mm >= 1.0 && mm <= u16::MAX as f64 {
                values[idx] = mm as u16;
            }
            if let Surface::Object(i) = best.1 {
                visible_pixels[i] += 1;
                let e = &mut extents[i];
                e[0] = e[0].min(u);
                e[1] = e[1].min(v);
                e[2] = e[2].max(u);
                e[3] = e[3].max(v);
            }
        }
    }
    let id = frame_id(k);
    let boxes = spec
        .objects
        .iter()
        .enumerate()
        .filter(|(i, _)| visible_pixels[*i] >= spec.gt_min_pixels.max(1))
        .filter_map(|(i, o)| {
            let e = extents[i];
            let b = BoundingBox2D {
                xmin: (e[0] as f64 - 0.5).max(0.0),
                ymin: (e[1] as f64 - 0.5).max(0.0),
                xmax: (e[2] as f64 + 0.5).min(w as f64),
                ymax: (e[3] as f64 + 0.5).min(h as f64),
                label: Some(o.label.clone()),
            };
            (b.width() >= spec.gt_min_side && b.height() >= spec.gt_min_side).then_some(FrameBox {
                bbox: b,
                proposal_index: None,
            })
        })
        .collect();
    let depth = DepthMap::new(intr.width, intr.height, values)?;
    Ok(RenderedFrame {
        frame: CameraFrame::new(id.clone(), intr, *pose, depth)?,
        surfaces,
        visible_pixels,
        gt: FrameBoxes { id, boxes },
    })
}

/// Sparse-point/depth pairs `(Z, z, frame)` for scale estimation: `z` is
/// the rendered (noisy, quantized) depth of a random valid pixel, `Z` the
/// exact depth there in reconstruction units.
pub fn correspondences(
    truth: &SceneTruth,
    spec: &SceneSpec,
    per_frame: usize,
) -> Vec<(f64, f64, String)> {
    let mut out = Vec::new();
    for (k, rf) in truth.frames.iter().enumerate() {
        let f = &rf.frame;
        let values = f.depth.values();
        let valid: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0).collect();
        if valid.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(truth.seed ^ 0x5eed_c0de);
        rng.set_stream(k as u64);
        let w = f.intrinsics.width as usize;
        let origin = Point3::from(*f.pose.translation());
        for _ in 0..per_frame {
            let idx = valid[rng.random_range(0..valid.len())];
            let dir_cam =
                backproject_pixel(&f.intrinsics, (idx % w) as f64, (idx / w) as f64, 1.0).coords;
            let (exact, _) = cast(spec, &origin, &(f.pose.rotation() * dir_cam));
            out.push((
                exact / truth.sfm_scale,
                values[idx] as f64 / 1000.0,
                f.id.clone(),
            ));
        }
    }
    out
}

/// Writes the scene directory consumed by the pipeline: `scene.json`,
/// `depth/*.pgm`, `correspondences.csv`, `gt_boxes.json`, `segments.json`
/// and `segments/*.ply`. Poses are written in reconstruction units.
pub fn write_scene(truth: &SceneTruth, spec: &SceneSpec, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&dir.join("depth"))?;
    mkdir(&dir.join("segments"))?;
    let mut entries: Vec<FrameEntry> = Vec::with_capacity(truth.frames.len());
    for rf in &truth.frames {
        let f = &rf.frame;
        let rel = format!("depth/{}.pgm", f.id);
        f.depth.save_pgm(dir.join(&rel))?;
        let mut e = SceneFile::entry_from_frame(f, rel);
        for t in &mut e.translation {
            *t /= truth.sfm_scale;
        }
        entries.push(e);
    }
    SceneFile {
        intrinsics: spec.intrinsics,
        frames: entries,
    }
    .save(dir.join("scene.json"))?;

    let mut csv = String::from("Z,z,frame\n");
    for (big_z, z, id) in correspondences(truth, spec, spec.correspondences_per_frame) {
        csv.push_str(&format!("{big_z},{z},{id}\n"));
    }
    let p = dir.join("correspondences.csv");
    std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;

    BoxesFile {
        frames: truth.ground_truth(),
    }
    .save(dir.join("gt_boxes.json"))?;

    let mut manifest = Vec::with_capacity(truth.segments.len());
    for (i, s) in truth.segments.iter().enumerate() {
        let rel = format!("segments/{i:03}_{}.ply", sanitize(&s.label));
        save_cloud(&s.points, dir.join(&rel))?;
        manifest.push(SegmentEntry {
            label: s.label.clone(),
            file: rel,
        });
    }
    let p = dir.join("segments.json");
    let text = serde_json::to_string_pretty(&manifest).expect("segment manifest serializes");
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("spec.json");
    let text = serde_json::to_string_pretty(spec).expect("spec serializes");
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Entry of `segments.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub label: String,
    /// Path of the segment PLY, relative to the manifest.
    pub file: String,
}

/// Loads a segment manifest and its PLY files.
pub fn load_segments(path: impl AsRef<Path>) -> Result<Vec<ObjectSegment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<SegmentEntry> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| ObjectSegment::new(e.label, crate::ply::load_cloud(base.join(&e.file))?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{project_annotations, VisibilityParams};
    use crate::camera::backproject_depth;
    use crate::synth::scenes::{frontal_wall_scene, tabletop_scene};

    #[test]
    fn frontal_plane_constant_depth() {
        let truth = generate_scene(&frontal_wall_scene(2.0, 0.0), 1).unwrap();
        let f = &truth.frames[0];
        assert!(f.frame.depth.values().iter().all(|&d| d == 2000));
        assert!(f.gt.boxes.is_empty());
        let noisy = generate_scene(&frontal_wall_scene(2.0, 0.003), 1).unwrap();
        let vals = noisy.frames[0].frame.depth.values();
        let mean = vals.iter().map(|&d| d as f64).sum::<f64>() / vals.len() as f64;
        assert!((mean - 2000.0).abs() < 0.1);
        assert!(vals.iter().all(|&d| (d as f64 - 2000.0).abs() <= 25.0));
    }

    #[test]
    fn degenerate_camera_rejected() {
        let mut spec = frontal_wall_scene(2.0, 0.0);
        spec.camera_path = vec![CameraSpec::LookAt {
            eye: [1.0, 1.0, 1.0],
            target: [1.0, 1.0, 1.0],
            up: [0.0, 0.0, 1.0],
        }];
        assert!(generate_scene(&spec, 0).is_err());
        spec.camera_path.clear();
        assert!(generate_scene(&spec, 0).is_err());
    }

    fn small_tabletop(frames: usize, sigma: f64) -> SceneSpec {
        let mut spec = tabletop_scene();
        spec.camera_path.truncate(frames);
        spec.depth_noise_sigma = sigma;
        spec
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let spec = small_tabletop(2, 0.005);
        let a = generate_scene(&spec, 9).unwrap();
        let b = generate_scene(&spec, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&spec, 10).unwrap();
        assert_ne!(a.frames[0].frame.depth, c.frames[0].frame.depth);
    }

    #[test]
    fn backprojection_lands_on_surfaces() {
        let spec = small_tabletop(1, 0.0);
        let truth = generate_scene(&spec, 0).unwrap();
        let f = &truth.frames[0].frame;
        let origin = Point3::from(*f.pose.translation());
        let w = f.intrinsics.width as usize;
        let mut checked = 0;
        for (idx, &d) in f.depth.values().iter().enumerate() {
            if d == 0 {
                continue;
            }
            let ray =
                backproject_pixel(&f.intrinsics, (idx % w) as f64, (idx / w) as f64, 1.0).coords;
            let (exact, _) = cast(&spec, &origin, &(f.pose.rotation() * ray));
            assert!((d as f64 / 1000.0 - exact).abs() <= 0.0005 + 1e-9);
            checked += 1;
        }
        assert!(checked > 100_000);
        let cloud = backproject_depth(&f.intrinsics, &f.depth).unwrap();
        assert_eq!(cloud.len(), truth.frames[0].point_surfaces().len());
    }

    #[test]
    fn renderer_boxes_match_projected_segments() {
        let spec = small_tabletop(4, 0.0);
        let truth = generate_scene(&spec, 0).unwrap();
        let projected = project_annotations(
            &truth.segments,
            &truth.camera_frames(),
            &VisibilityParams::default(),
        )
        .unwrap();
        let mut compared = 0;
        for (rf, proj) in truth.frames.iter().zip(&projected) {
            for g in &rf.gt.boxes {
                let label = g.bbox.label.as_deref();
                let obj = spec
                    .objects
                    .iter()
                    .position(|o| Some(o.label.as_str()) == label)
                    .unwrap();
                // Only objects that no other surface covers partially.
                if rf.visible_pixels[obj] < 400 {
                    continue;
                }
                let Some(p) = proj.boxes.iter().find(|b| b.bbox.label.as_deref() == label) else {
                    panic!("{label:?} rendered but not projected in {}", rf.gt.id);
                };
                for (a, b) in [
                    (g.bbox.xmin, p.bbox.xmin),
                    (g.bbox.ymin, p.bbox.ymin),
                    (g.bbox.xmax, p.bbox.xmax),
                    (g.bbox.ymax, p.bbox.ymax),
                ] {
                    assert!(
                        (a - b).abs() <= 2.0,
                        "{label:?} in {}: {a} vs {b}",
                        rf.gt.id
                    );
                }
                compared += 1;
            }
        }
        assert!(compared >= 20, "compared {compared}");
    }

    #[test]
    fn scene_directory_round_trip() {
        let spec = small_tabletop(2, 0.005);
        let truth = generate_scene(&spec, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(&truth, &spec, dir.path()).unwrap();
        let (scene, frames) = crate::scene::load_scene(dir.path().join("scene.json")).unwrap();
        assert_eq!(scene.frames.len(), 2);
        assert_eq!(frames[0].depth, truth.frames[0].frame.depth);
        let t0 = frames[0].pose.translation() * spec.sfm_scale;
        assert!((t0 - truth.frames[0].frame.pose.translation()).norm() < 1e-9);
        let segs = load_segments(dir.path().join("segments.json")).unwrap();
        assert_eq!(segs.len(), spec.objects.len());
        assert_eq!(segs[0].points, truth.segments[0].points);
        let gt = BoxesFile::load(dir.path().join("gt_boxes.json")).unwrap();
        assert_eq!(gt.frames, truth.ground_truth());
        let text = std::fs::read_to_string(dir.path().join("correspondences.csv")).unwrap();
        let pairs = crate::scale::parse_correspondences(&text).unwrap();
        assert_eq!(pairs.len(), 100);
        let est = crate::scale::estimate_scale(
            &pairs.iter().map(|p| p.0).collect::<Vec<_>>(),
            &crate::scale::FusionParams::default(),
        )
        .unwrap();
        assert!((est.alpha - spec.sfm_scale).abs() / spec.sfm_scale < 0.01);
    }
}
