//! Pipeline configuration: built-in defaults, then the file's `defaults`
//! layer, then the file's top-level keys, then `--set key=value` overrides.

use std::path::{Path, PathBuf};

use mvprop_core::annotate::VisibilityParams;
use mvprop_core::eval::default_thresholds;
use mvprop_core::planes::HoughParams;
use mvprop_core::proposals::ProposalParams;
use mvprop_core::scale::FusionParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub thresholds: Vec<f64>,
    /// IoU threshold for average precision.
    pub ap_iou: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            ap_iou: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Scene JSON (intrinsics, poses, depth files).
    pub scene: Option<PathBuf>,
    /// `Z,z[,frame]` CSV; defaults to `correspondences.csv` beside the scene.
    pub correspondences: Option<PathBuf>,
    /// Fixed scale factor; skips estimation when set.
    pub alpha: Option<f64>,
    /// Ground-truth boxes JSON; defaults to `gt_boxes.json` beside the scene,
    /// then to projecting `segments.json`.
    pub ground_truth: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; 0 uses every core. Never changes results.
    pub threads: usize,
    /// Also write each frame's back-projected cloud in single-view runs.
    pub write_frame_clouds: bool,
    pub fusion: FusionParams,
    pub hough: HoughParams,
    pub proposals: ProposalParams,
    pub visibility: VisibilityParams,
    pub eval: EvalParams,
}

fn merge(base: &mut Value, layer: &Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, l) => *b = l.clone(),
    }
}

/// Applies `a.b.c=value`; the value is read as JSON when it parses, else as a string.
pub fn apply_set(config: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        CliError::Validation(format!("--set expects key=value, got {assignment:?}"))
    })?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Validation("--set with an empty key".into()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Validation(format!("--set {key}: {part:?} is not inside an object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            break;
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

impl PipelineConfig {
    /// Builds the effective configuration from an optional file and overrides.
    pub fn resolve(file: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let mut value =
            serde_json::to_value(PipelineConfig::default()).expect("defaults serialize");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Validation(format!("cannot read config {}: {e}", path.display()))
            })?;
            let mut doc: Value = serde_json::from_str(&text).map_err(|e| {
                CliError::Validation(format!("config {} is not valid JSON: {e}", path.display()))
            })?;
            let doc_obj = doc
                .as_object_mut()
                .ok_or_else(|| CliError::Validation("config must be a JSON object".into()))?;
            if let Some(defaults) = doc_obj.remove("defaults") {
                merge(&mut value, &defaults);
            }
            merge(&mut value, &doc);
        }
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let config: PipelineConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Validation(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Parameter checks that need no file access.
    pub fn validate(&self) -> Result<(), CliError> {
        let v = |r: mvprop_core::Result<()>| r.map_err(|e| CliError::Validation(e.to_string()));
        v(self.fusion.validate())?;
        v(self.hough.validate())?;
        v(self.proposals.validate())?;
        v(self.visibility.validate())?;
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(CliError::Validation(format!(
                    "alpha must be positive, got {a}"
                )));
            }
        }
        if let Some(t) = self
            .eval
            .thresholds
            .iter()
            .find(|t| !(0.0..=1.0).contains(*t))
        {
            return Err(CliError::Validation(format!(
                "IoU threshold {t} outside [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&self.eval.ap_iou) {
            return Err(CliError::Validation("ap_iou outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Stage parameters with the global seed applied.
    pub fn seeded_hough(&self) -> HoughParams {
        HoughParams {
            seed: self.seed,
            ..self.hough
        }
    }

    pub fn seeded_proposals(&self) -> ProposalParams {
        let mut p = self.proposals.clone();
        p.mean_shift.seed = self.seed;
        p
    }

    /// The configuration without execution-only keys (`threads`, `output`).
    pub fn canonical(&self) -> Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("threads");
            obj.remove("output");
        }
        value
    }

    /// SHA-256 of the compact canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().to_string().as_bytes()))
    }
}
