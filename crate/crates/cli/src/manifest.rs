//! Run manifest: configuration hash, versions, stage timings and a content
//! hash of every artifact.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub mvprop: String,
    pub manifest_format: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub flow: String,
    pub config_hash: String,
    pub versions: Versions,
    pub stages: Vec<StageTiming>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn new(flow: &str, config_hash: String) -> Self {
        Self {
            flow: flow.to_string(),
            config_hash,
            versions: Versions {
                mvprop: env!("CARGO_PKG_VERSION").to_string(),
                manifest_format: 1,
            },
            stages: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Hashes every file under `dir` except the manifest and partial marker,
    /// sorted by path.
    pub fn collect_artifacts(&mut self, dir: &Path) -> std::io::Result<()> {
        let mut files = Vec::new();
        walk(dir, dir, &mut files)?;
        files.sort();
        self.artifacts = files
            .into_iter()
            .filter(|rel| rel != MANIFEST_FILE && rel != PARTIAL_MARKER)
            .map(|rel| {
                let bytes = std::fs::read(dir.join(&rel))?;
                Ok(Artifact {
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    bytes: bytes.len() as u64,
                    path: rel,
                })
            })
            .collect::<std::io::Result<_>>()?;
        Ok(())
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = ".partial";

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            walk(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walked path is under root");
            let parts: Vec<String> = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            out.push(parts.join("/"));
        }
    }
    Ok(())
}
