//! Metric scale recovery for an SfM reconstruction and depth-frame fusion.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::backproject_depth;
use crate::cloud::{transform_cloud, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scene::CameraFrame;

/// A sparse SfM point depth paired with the sensor depth at the same pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthCorrespondence {
    /// SfM depth, arbitrary units.
    pub sfm_depth: f64,
    /// Sensor depth in meters.
    pub metric_depth: f64,
}

impl DepthCorrespondence {
    pub fn new(sfm_depth: f64, metric_depth: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(sfm_depth) || !ok(metric_depth) {
            return Err(Error::invalid(format!(
                "correspondence depths must be positive and finite ({sfm_depth}, {metric_depth})"
            )));
        }
        Ok(Self {
            sfm_depth,
            metric_depth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    /// Metric units per SfM unit.
    pub alpha: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Voxel edge in meters; `0` disables downsampling.
    pub voxel_size: f64,
    pub percentile_low: f64,
    pub percentile_high: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.005,
            percentile_low: 10.0,
            percentile_high: 90.0,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        let in_range = |p: f64| (0.0..=100.0).contains(&p);
        if !(self.voxel_size >= 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::invalid("voxel_size must be >= 0"));
        }
        if !in_range(self.percentile_low)
            || !in_range(self.percentile_high)
            || self.percentile_low >= self.percentile_high
        {
            return Err(Error::invalid(
                "percentiles must satisfy 0 <= low < high <= 100",
            ));
        }
        Ok(())
    }
}

/// Nearest-rank percentile of ascending `sorted` (non-empty).
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Median of unsorted values; even counts average the two middle values.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median of `metric / sfm` over the correspondences whose SfM depth lies in
/// the configured percentile band.
pub fn estimate_scale(
    pairs: &[DepthCorrespondence],
    params: &FusionParams,
) -> Result<ScaleEstimate> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(Error::Estimation("no correspondences".into()));
    }
    if let Some(bad) = pairs.iter().find(|c| {
        !(c.sfm_depth > 0.0
            && c.metric_depth > 0.0
            && c.sfm_depth.is_finite()
            && c.metric_depth.is_finite())
    }) {
        return Err(Error::Estimation(format!("invalid correspondence {bad:?}")));
    }
    let mut depths: Vec<f64> = pairs.iter().map(|c| c.sfm_depth).collect();
    depths.sort_by(f64::total_cmp);
    let lo = nearest_rank(&depths, params.percentile_low);
    let hi = nearest_rank(&depths, params.percentile_high);

    let mut ratios: Vec<f64> = pairs
        .iter()
        .filter(|c| c.sfm_depth >= lo && c.sfm_depth <= hi)
        .map(|c| c.metric_depth / c.sfm_depth)
        .collect();
    let sample_count = ratios.len();
    let alpha = median(&mut ratios)
        .ok_or_else(|| Error::Estimation("every correspondence was filtered out".into()))?;
    Ok(ScaleEstimate {
        alpha,
        sample_count,
    })
}

/// Back-projects each frame, moves it to the world with the translation
/// rescaled by `alpha`, concatenates, and optionally voxel-downsamples.
pub fn fuse_frames(
    frames: &[CameraFrame],
    scale: &ScaleEstimate,
    params: &FusionParams,
) -> Result<PointCloud> {
    params.validate()?;
    if !(scale.alpha > 0.0 && scale.alpha.is_finite()) {
        return Err(Error::invalid("scale factor must be positive"));
    }
    if frames.is_empty() {
        return Ok(PointCloud::empty());
    }
    let intr = frames[0].intrinsics;
    if frames.iter().any(|f| f.intrinsics != intr) {
        return Err(Error::invalid(
            "all frames must share one set of intrinsics",
        ));
    }
    let parts = frames
        .par_iter()
        .map(|f| {
            let local = backproject_depth(&f.intrinsics, &f.depth)?;
            Ok(transform_cloud(
                &local,
                &f.pose.with_scaled_translation(scale.alpha),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let fused = PointCloud::concat(&parts);
    Ok(if params.voxel_size > 0.0 {
        voxel_downsample(&fused, params.voxel_size)
    } else {
        fused
    })
}

/// Replaces the points of each occupied voxel by their centroid. Voxels are
/// emitted in order of first occupancy.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> PointCloud {
    assert!(voxel_size > 0.0);
    let inv = 1.0 / voxel_size;
    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<([f64; 3], [u64; 3], usize)> = Vec::new();
    let colors = cloud.colors();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = [
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        ];
        let idx = *slot.entry(key).or_insert_with(|| {
            sums.push(([0.0; 3], [0; 3], 0));
            sums.len() - 1
        });
        let s = &mut sums[idx];
        s.0[0] += p.x;
        s.0[1] += p.y;
        s.0[2] += p.z;
        if let Some(c) = colors {
            for (acc, &ch) in s.1.iter_mut().zip(&c[i]) {
                *acc += ch as u64;
            }
        }
        s.2 += 1;
    }
    let points = sums
        .iter()
        .map(|(s, _, n)| {
            let n = *n as f64;
            Point3::new(s[0] / n, s[1] / n, s[2] / n)
        })
        .collect();
    let out_colors = colors.map(|_| {
        sums.iter()
            .map(|(_, c, n)| {
                let n = *n as u64;
                [
                    ((c[0] + n / 2) / n) as u8,
                    ((c[1] + n / 2) / n) as u8,
                    ((c[2] + n / 2) / n) as u8,
                ]
            })
            .collect()
    });
    PointCloud::from_trusted(points, out_colors)
}

/// A correspondence with the frame id it came from, when given.
pub type TaggedCorrespondence = (DepthCorrespondence, Option<String>);

/// Reads `Z,z[,frame_id]` lines. Blank lines and `#` comments are skipped, as
/// is a leading header line that does not parse as numbers.
pub fn parse_correspondences(
    text: &str,
) -> std::result::Result<Vec<TaggedCorrespondence>, (usize, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err((i + 1, format!("expected `Z,z[,frame]`, found {line:?}")));
        }
        let (big, small) = match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => (a, b),
            _ if out.is_empty() && i == 0 => continue,
            _ => return Err((i + 1, format!("non-numeric depth in {line:?}"))),
        };
        let c = DepthCorrespondence::new(big, small).map_err(|e| (i + 1, e.to_string()))?;
        out.push((c, fields.get(2).map(|s| s.to_string())));
    }
    Ok(out)
}
