//! Pipeline stages as file-to-file steps, and the two end-to-end flows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mvprop_core::annotate::{project_annotations, project_proposals, BoxesFile, FrameBoxes};
use mvprop_core::cloud::PointCloud;
use mvprop_core::cuboid::Cuboid3D;
use mvprop_core::eval::{
    average_precision, label_proposals, recall_report, ApReport, ProposalLabel, RecallReport,
    ScoredDetection,
};
use mvprop_core::geometry::{Point3, Pose};
use mvprop_core::planes::{
    assign_inliers, detect_planes, planes_to_remove, remove_planes, PlaneModel,
};
use mvprop_core::ply::{load_cloud, save_cloud};
use mvprop_core::proposals::{
    generate_proposals_multiview, generate_proposals_singleview, Proposal3D, ProposalRecord,
};
use mvprop_core::scale::{
    estimate_scale, fuse_frames, median, parse_correspondences, DepthCorrespondence, ScaleEstimate,
    TaggedCorrespondence,
};
use mvprop_core::scene::{load_scene, CameraFrame};
use mvprop_core::synth::render::load_segments;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{EvalParams, PipelineConfig};
use crate::error::CliError;
use crate::manifest::{Manifest, MANIFEST_FILE, PARTIAL_MARKER};

pub const FUSED_CLOUD: &str = "fused.ply";
pub const FUSE_REPORT: &str = "fuse_report.json";
pub const FUSE_REPORT_CSV: &str = "fuse_report.csv";
pub const PLANES_FILE: &str = "planes.json";
pub const PROPOSALS_FILE: &str = "proposals.json";
pub const MEMBERS_FILE: &str = "proposal_members.json";
pub const BOXES_FILE: &str = "boxes.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const RECALL_FILE: &str = "recall.json";
pub const RECALL_CSV: &str = "recall.csv";
pub const LABELS_FILE: &str = "labels.json";
pub const AP_FILE: &str = "ap.json";
pub const AP_CSV: &str = "ap.csv";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseReport {
    pub alpha: f64,
    /// Correspondences left after percentile filtering (0 when alpha was given).
    pub sample_count: usize,
    pub fused_points: usize,
    /// Median `z / Z` of each frame's own correspondences, for inspection.
    pub per_frame_medians: BTreeMap<String, f64>,
}

impl FuseReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "key,value\nalpha,{}\nsample_count,{}\nfused_points,{}\n",
            self.alpha, self.sample_count, self.fused_points
        );
        for (id, m) in &self.per_frame_medians {
            out.push_str(&format!("median:{id},{m}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabels {
    pub id: String,
    pub labels: Vec<ProposalLabel>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::output(dir))?;
    }
    std::fs::write(path, text).map_err(CliError::output(path))
}

pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn scene_dir(scene: &Path) -> &Path {
    scene.parent().unwrap_or(Path::new("."))
}

/// Explicit correspondence path, else `correspondences.csv` beside the scene
/// when present.
fn correspondence_path(config: &PipelineConfig, scene: &Path) -> Result<Option<PathBuf>, CliError> {
    match &config.correspondences {
        Some(p) => require_file(p, "correspondence file").map(|_| Some(p.clone())),
        None => {
            let p = scene_dir(scene).join("correspondences.csv");
            Ok(p.is_file().then_some(p))
        }
    }
}

pub fn load_correspondences(path: &Path) -> Result<Vec<TaggedCorrespondence>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_correspondences(&text)
        .map_err(|(line, msg)| mvprop_core::Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })
        .map_err(CliError::stage("fuse"))
}

/// Scale from the configured alpha, else from the correspondences.
/// A scene without frames or correspondences gets alpha 1.
fn resolve_scale(
    config: &PipelineConfig,
    pairs: &[TaggedCorrespondence],
    frame_count: usize,
) -> Result<ScaleEstimate, CliError> {
    if let Some(alpha) = config.alpha {
        return Ok(ScaleEstimate {
            alpha,
            sample_count: 0,
        });
    }
    if pairs.is_empty() && frame_count == 0 {
        return Ok(ScaleEstimate {
            alpha: 1.0,
            sample_count: 0,
        });
    }
    let plain: Vec<DepthCorrespondence> = pairs.iter().map(|(c, _)| *c).collect();
    estimate_scale(&plain, &config.fusion).map_err(CliError::stage("fuse"))
}

fn per_frame_medians(pairs: &[TaggedCorrespondence]) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (c, id) in pairs {
        if let Some(id) = id {
            groups
                .entry(id.clone())
                .or_default()
                .push(c.metric_depth / c.sfm_depth);
        }
    }
    groups
        .into_iter()
        .filter_map(|(id, mut v)| median(&mut v).map(|m| (id, m)))
        .collect()
}

pub struct Fused {
    pub frames: Vec<CameraFrame>,
    pub scale: ScaleEstimate,
    pub cloud: PointCloud,
    pub report: FuseReport,
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    require_file(path, "point cloud")?;
    load_cloud(path).map_err(CliError::stage("load"))
}

pub fn load_frames(scene: &Path) -> Result<Vec<CameraFrame>, CliError> {
    require_file(scene, "scene file")?;
    load_scene(scene)
        .map(|(_, f)| f)
        .map_err(CliError::stage("load"))
}

/// Scale for a scene with `frame_count` frames, plus the correspondences used.
pub fn scene_scale(
    config: &PipelineConfig,
    scene: &Path,
    frame_count: usize,
) -> Result<(ScaleEstimate, Vec<TaggedCorrespondence>), CliError> {
    let corr = correspondence_path(config, scene)?;
    let pairs = match (&corr, config.alpha) {
        (Some(p), None) => load_correspondences(p)?,
        _ => Vec::new(),
    };
    Ok((resolve_scale(config, &pairs, frame_count)?, pairs))
}

/// Loads the scene, fixes the scale and fuses every frame into one world cloud.
pub fn fuse(config: &PipelineConfig, scene: &Path) -> Result<Fused, CliError> {
    correspondence_path(config, scene)?;
    let frames = load_frames(scene)?;
    let (scale, pairs) = scene_scale(config, scene, frames.len())?;
    let cloud = fuse_frames(&frames, &scale, &config.fusion).map_err(CliError::stage("fuse"))?;
    let report = FuseReport {
        alpha: scale.alpha,
        sample_count: scale.sample_count,
        fused_points: cloud.len(),
        per_frame_medians: per_frame_medians(&pairs),
    };
    Ok(Fused {
        frames,
        scale,
        cloud,
        report,
    })
}

pub fn write_fused(out: &Path, fused: &Fused) -> Result<(), CliError> {
    save_cloud(&fused.cloud, out.join(FUSED_CLOUD)).map_err(CliError::stage("fuse"))?;
    write_json(&out.join(FUSE_REPORT), &fused.report)?;
    write_text(&out.join(FUSE_REPORT_CSV), &fused.report.to_csv())
}

/// Planes of `cloud`; an empty cloud has none.
pub fn planes(config: &PipelineConfig, cloud: &PointCloud) -> Result<Vec<PlaneModel>, CliError> {
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    detect_planes(cloud, &config.seeded_hough()).map_err(CliError::stage("planes"))
}

/// Planes from a JSON list, with inliers recomputed against `cloud`.
pub fn load_planes(
    path: &Path,
    cloud: &PointCloud,
    threshold: f64,
) -> Result<Vec<PlaneModel>, CliError> {
    let mut planes: Vec<PlaneModel> = read_json(path)?;
    for p in &planes {
        let norm = p.normal_vec().norm();
        if !((norm - 1.0).abs() < 1e-6 && p.rho.is_finite()) {
            return Err(CliError::Validation(format!(
                "{}: plane normal is not unit length",
                path.display()
            )));
        }
    }
    assign_inliers(cloud, &mut planes, threshold);
    Ok(planes)
}

/// `filtered_<fraction>.ply` for every fraction with a distinct removal count.
pub fn write_filtered_clouds(
    out: &Path,
    cloud: &PointCloud,
    planes: &[PlaneModel],
    fractions: &[f64],
) -> Result<(), CliError> {
    let mut seen = Vec::new();
    for &f in fractions {
        let removed = planes_to_remove(planes.len(), f);
        if seen.contains(&removed) {
            continue;
        }
        seen.push(removed);
        let filtered = remove_planes(cloud, planes, f).map_err(CliError::stage("planes"))?;
        save_cloud(&filtered, out.join(format!("filtered_{f:.2}.ply")))
            .map_err(CliError::stage("planes"))?;
    }
    Ok(())
}

pub fn propose(
    config: &PipelineConfig,
    cloud: &PointCloud,
    planes: &[PlaneModel],
) -> Result<Vec<Proposal3D>, CliError> {
    generate_proposals_multiview(cloud, planes, &config.seeded_proposals())
        .map_err(CliError::stage("propose"))
}

pub fn write_proposals(out: &Path, proposals: &[Proposal3D]) -> Result<(), CliError> {
    let records: Vec<ProposalRecord> = proposals.iter().map(ProposalRecord::from).collect();
    let members: Vec<&[usize]> = proposals
        .iter()
        .map(|p| p.point_indices.as_slice())
        .collect();
    write_json(&out.join(PROPOSALS_FILE), &records)?;
    write_json(&out.join(MEMBERS_FILE), &members)
}

/// Reads proposals back. Member indices come from the sidecar next to the
/// proposals file when present, else from the cloud points inside each cuboid.
pub fn load_proposals(path: &Path, cloud: &PointCloud) -> Result<Vec<Proposal3D>, CliError> {
    let records: Vec<ProposalRecord> = read_json(path)?;
    let sidecar = path.with_file_name(MEMBERS_FILE);
    let members: Option<Vec<Vec<usize>>> = if sidecar.is_file() {
        Some(read_json(&sidecar)?)
    } else {
        None
    };
    if let Some(m) = &members {
        if m.len() != records.len() {
            return Err(CliError::Validation(format!(
                "{} lists {} proposals but {} has {}",
                path.display(),
                records.len(),
                sidecar.display(),
                m.len()
            )));
        }
    }
    records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let cuboid = Cuboid3D::new(Point3::from(r.min_corner), Point3::from(r.max_corner));
            let point_indices = match &members {
                Some(m) => m[k].clone(),
                None => (0..cloud.len())
                    .filter(|&i| cuboid.contains(&cloud.points()[i]))
                    .collect(),
            };
            if point_indices.iter().any(|&i| i >= cloud.len()) {
                return Err(CliError::Validation(format!(
                    "proposal {k} refers to points outside the cloud"
                )));
            }
            Ok(Proposal3D {
                cuboid,
                point_indices,
                provenance: r.provenance,
            })
        })
        .collect()
}

/// Frames with translations in metric units.
pub fn metric_frames(frames: &[CameraFrame], alpha: f64) -> Vec<CameraFrame> {
    frames
        .iter()
        .map(|f| CameraFrame {
            pose: f.pose.with_scaled_translation(alpha),
            ..f.clone()
        })
        .collect()
}

pub fn project(
    config: &PipelineConfig,
    proposals: &[Proposal3D],
    cloud: &PointCloud,
    metric: &[CameraFrame],
) -> Result<Vec<FrameBoxes>, CliError> {
    project_proposals(proposals, cloud, metric, &config.visibility)
        .map_err(CliError::stage("project"))
}

/// Ground truth: the configured boxes file, else `gt_boxes.json` beside the
/// scene, else `segments.json` projected into the frames, else nothing.
pub fn ground_truth(
    config: &PipelineConfig,
    scene: &Path,
    metric: impl FnOnce() -> Result<Vec<CameraFrame>, CliError>,
) -> Result<Vec<FrameBoxes>, CliError> {
    if let Some(p) = &config.ground_truth {
        require_file(p, "ground-truth file")?;
        return BoxesFile::load(p)
            .map(|b| b.frames)
            .map_err(CliError::stage("eval"));
    }
    let dir = scene_dir(scene);
    let boxes = dir.join("gt_boxes.json");
    if boxes.is_file() {
        return BoxesFile::load(&boxes)
            .map(|b| b.frames)
            .map_err(CliError::stage("eval"));
    }
    let segments = dir.join("segments.json");
    if segments.is_file() {
        let segs = load_segments(&segments).map_err(CliError::stage("eval"))?;
        return project_annotations(&segs, &metric()?, &config.visibility)
            .map_err(CliError::stage("eval"));
    }
    Ok(Vec::new())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub recall: RecallReport,
    pub labels: Vec<FrameLabels>,
    pub ap: Option<ApReport>,
}

/// Recall, proposal labels and, given scored detections, average precision.
pub fn evaluate(
    eval: &EvalParams,
    proposals: &[FrameBoxes],
    gt: &[FrameBoxes],
    detections: Option<&[ScoredDetection]>,
) -> Result<Evaluation, CliError> {
    let stage = CliError::stage;
    let recall = recall_report(proposals, gt, &eval.thresholds).map_err(stage("eval"))?;
    let labels = label_proposals(proposals, gt)
        .map_err(stage("eval"))?
        .into_iter()
        .zip(proposals)
        .map(|(labels, f)| FrameLabels {
            id: f.id.clone(),
            labels,
        })
        .collect();
    let ap = detections
        .map(|d| average_precision(d, gt, eval.ap_iou))
        .transpose()
        .map_err(stage("eval"))?;
    Ok(Evaluation { recall, labels, ap })
}

pub fn write_evaluation(out: &Path, e: &Evaluation) -> Result<(), CliError> {
    write_json(&out.join(RECALL_FILE), &e.recall)?;
    write_text(&out.join(RECALL_CSV), &e.recall.to_csv())?;
    write_json(&out.join(LABELS_FILE), &e.labels)?;
    if let Some(ap) = &e.ap {
        write_json(&out.join(AP_FILE), ap)?;
        write_text(&out.join(AP_CSV), &ap.to_csv())?;
    }
    Ok(())
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("`{key}` must be set")))
}

/// Runs `body` inside a pool of `config.threads` workers, bracketed by the
/// `.partial` marker: written first, removed once the manifest is complete.
fn run_flow(
    flow: &str,
    config: &PipelineConfig,
    body: impl FnOnce(&Path, &Path, &mut Manifest) -> Result<(), CliError> + Send,
) -> Result<Manifest, CliError> {
    let scene = required(&config.scene, "scene")?.clone();
    let out = required(&config.output, "output")?.clone();
    require_file(&scene, "scene file")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| {
            CliError::Validation(format!("cannot start {} threads: {e}", config.threads))
        })?;
    std::fs::create_dir_all(&out).map_err(CliError::output(&out))?;
    let marker = out.join(PARTIAL_MARKER);
    write_text(&marker, &format!("{flow} running\n"))?;

    let mut manifest = Manifest::new(flow, config.hash());
    match pool.install(|| body(&scene, &out, &mut manifest)) {
        Ok(()) => {
            write_json(&out.join(CONFIG_FILE), &config.canonical())?;
            manifest
                .collect_artifacts(&out)
                .map_err(CliError::output(&out))?;
            write_json(&out.join(MANIFEST_FILE), &manifest)?;
            std::fs::remove_file(&marker).map_err(CliError::output(&marker))?;
            Ok(manifest)
        }
        Err(e) => {
            // Best effort: the original error matters more than the marker text.
            let _ = write_text(&marker, &format!("{flow} failed: {e}\n"));
            Err(e)
        }
    }
}

/// fuse → planes → propose → project → eval on the whole scene.
pub fn run_multiview(config: &PipelineConfig) -> Result<Manifest, CliError> {
    config.validate()?;
    run_flow("multiview", config, |scene, out, m| {
        let fused = m.time("fuse", || fuse(config, scene))?;
        write_fused(out, &fused)?;
        let planes = m.time("planes", || planes(config, &fused.cloud))?;
        write_json(&out.join(PLANES_FILE), &planes)?;
        let proposals = m.time("propose", || propose(config, &fused.cloud, &planes))?;
        write_proposals(out, &proposals)?;
        let metric = metric_frames(&fused.frames, fused.scale.alpha);
        let boxes = m.time("project", || {
            project(config, &proposals, &fused.cloud, &metric)
        })?;
        write_json(
            &out.join(BOXES_FILE),
            &BoxesFile {
                frames: boxes.clone(),
            },
        )?;
        m.time("eval", || {
            let gt = ground_truth(config, scene, || Ok(metric.clone()))?;
            write_json(
                &out.join(GROUND_TRUTH_FILE),
                &BoxesFile { frames: gt.clone() },
            )?;
            write_evaluation(out, &evaluate(&config.eval, &boxes, &gt, None)?)
        })
    })
}

/// Planes, proposals and boxes from each frame alone, then one evaluation
/// over all frames. Per-frame outputs go to `frames/<id>/`.
pub fn run_singleview(config: &PipelineConfig) -> Result<Manifest, CliError> {
    config.validate()?;
    run_flow("singleview", config, |scene, out, m| {
        let frames = m.time("load", || load_frames(scene))?;
        let hough = config.seeded_hough();
        let params = config.seeded_proposals();
        let mut all_boxes = Vec::with_capacity(frames.len());
        m.time("frames", || -> Result<(), CliError> {
            for frame in &frames {
                let result = generate_proposals_singleview(frame, &hough, &params)
                    .map_err(CliError::stage("propose"))?;
                let local = CameraFrame {
                    pose: Pose::identity(),
                    ..frame.clone()
                };
                let mut boxes = project(
                    config,
                    &result.proposals,
                    &result.cloud,
                    std::slice::from_ref(&local),
                )?;
                let dir = out.join("frames").join(&frame.id);
                write_json(&dir.join(PLANES_FILE), &result.planes)?;
                write_proposals(&dir, &result.proposals)?;
                if config.write_frame_clouds {
                    save_cloud(&result.cloud, dir.join("cloud.ply"))
                        .map_err(CliError::stage("propose"))?;
                }
                let own: FrameBoxes = boxes.pop().expect("one frame projected");
                write_json(&dir.join(BOXES_FILE), &own)?;
                all_boxes.push(own);
            }
            Ok(())
        })?;
        write_json(
            &out.join(BOXES_FILE),
            &BoxesFile {
                frames: all_boxes.clone(),
            },
        )?;
        m.time("eval", || {
            let gt = ground_truth(config, scene, || {
                let (scale, _) = scene_scale(config, scene, frames.len())?;
                Ok(metric_frames(&frames, scale.alpha))
            })?;
            write_json(
                &out.join(GROUND_TRUTH_FILE),
                &BoxesFile { frames: gt.clone() },
            )?;
            write_evaluation(out, &evaluate(&config.eval, &all_boxes, &gt, None)?)
        })
    })
}
