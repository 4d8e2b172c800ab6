//! Scene description JSON: shared intrinsics plus one pose and depth file per frame.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};

/// One registered RGB-D view.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub depth: DepthMap,
}

impl CameraFrame {
    pub fn new(
        id: impl Into<String>,
        intrinsics: Intrinsics,
        pose: Pose,
        depth: DepthMap,
    ) -> Result<Self> {
        intrinsics.validate()?;
        if depth.width() != intrinsics.width || depth.height() != intrinsics.height {
            return Err(Error::invalid("depth map size does not match intrinsics"));
        }
        Ok(Self {
            id: id.into(),
            intrinsics,
            pose,
            depth,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: String,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub depth_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub intrinsics: Intrinsics,
    pub frames: Vec<FrameEntry>,
}

impl SceneFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: SceneFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        scene.intrinsics.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("scene serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn entry_from_frame(frame: &CameraFrame, depth_file: impl Into<String>) -> FrameEntry {
        let t = frame.pose.translation();
        FrameEntry {
            id: frame.id.clone(),
            rotation: frame.pose.rotation_row_major(),
            translation: [t.x, t.y, t.z],
            depth_file: depth_file.into(),
            rgb_file: None,
        }
    }

    /// Reads every depth file, resolving relative paths against `base_dir`.
    pub fn load_frames(&self, base_dir: impl AsRef<Path>) -> Result<Vec<CameraFrame>> {
        let base_dir = base_dir.as_ref();
        self.frames
            .iter()
            .map(|entry| {
                let pose = Pose::from_arrays(&entry.rotation, &entry.translation)
                    .map_err(|e| Error::invalid(format!("frame {}: {e}", entry.id)))?;
                let depth_path = resolve(base_dir, &entry.depth_file);
                let depth = DepthMap::load_pgm(&depth_path)?;
                CameraFrame::new(entry.id.clone(), self.intrinsics, pose, depth)
                    .map_err(|e| Error::invalid(format!("frame {}: {e}", entry.id)))
            })
            .collect()
    }
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads `scene.json` and its depth maps; relative paths are taken from the JSON's directory.
pub fn load_scene(path: impl AsRef<Path>) -> Result<(SceneFile, Vec<CameraFrame>)> {
    let path = path.as_ref();
    let scene = SceneFile::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let frames = scene.load_frames(base)?;
    Ok((scene, frames))
}
