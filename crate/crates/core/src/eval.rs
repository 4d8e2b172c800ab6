//! Box overlap, recall curves, proposal labels and average precision.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotate::FrameBoxes;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox2D;

/// Class name used for ground-truth boxes without a label.
pub const UNLABELED: &str = "object";

pub fn iou_2d(a: &BoundingBox2D, b: &BoundingBox2D) -> f64 {
    let (aa, ab) = (a.area(), b.area());
    if aa <= 0.0 || ab <= 0.0 {
        return 0.0;
    }
    let inter = a.intersection_area(b);
    let union = aa + ab - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// IoU grid 0.50, 0.55, ..., 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub classes: Vec<String>,
    pub thresholds: Vec<f64>,
    /// `recall[c][t]` for class `c` at threshold `t`.
    pub recall: Vec<Vec<f64>>,
    /// Ground-truth instances per class.
    pub instances: Vec<usize>,
    pub proposals_per_image: f64,
}

impl RecallReport {
    pub fn class_recall(&self, class: &str, threshold: f64) -> Option<f64> {
        let c = self.classes.iter().position(|k| k == class)?;
        let t = self
            .thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-9)?;
        Some(self.recall[c][t])
    }

    /// Unweighted class mean at `threshold`; `None` without classes.
    pub fn mean_recall(&self, threshold: f64) -> Option<f64> {
        let t = self
            .thresholds
            .iter()
            .position(|&t| (t - threshold).abs() < 1e-9)?;
        let per: Vec<(&str, f64)> = self
            .classes
            .iter()
            .map(|c| c.as_str())
            .zip(self.recall.iter().map(|r| r[t]))
            .collect();
        class_average(&per, &[]).ok()
    }

    /// Whether every class curve is non-increasing along an ascending grid.
    pub fn is_monotone(&self) -> bool {
        let ascending = self.thresholds.windows(2).all(|w| w[0] <= w[1]);
        !ascending
            || self
                .recall
                .iter()
                .all(|row| row.windows(2).all(|w| w[1] <= w[0]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for t in &self.thresholds {
            out.push_str(&format!(",{t:.2}"));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.recall) {
            out.push_str(&csv_field(c));
            for r in row {
                out.push_str(&format!(",{r}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn label_of(b: &BoundingBox2D) -> &str {
    b.label.as_deref().unwrap_or(UNLABELED)
}

fn index_frames<'a>(
    frames: &'a [FrameBoxes],
    side: &str,
) -> Result<HashMap<&'a str, &'a FrameBoxes>> {
    let mut map = HashMap::with_capacity(frames.len());
    for f in frames {
        if map.insert(f.id.as_str(), f).is_some() {
            return Err(Error::invalid(format!(
                "duplicate frame id {:?} in {side}",
                f.id
            )));
        }
    }
    Ok(map)
}

/// Per-class recall of `gt` by `proposals` at each IoU threshold. A ground-truth
/// box is covered at `t` when some proposal in its frame reaches IoU ≥ `t`.
pub fn recall_report(
    proposals: &[FrameBoxes],
    gt: &[FrameBoxes],
    thresholds: &[f64],
) -> Result<RecallReport> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("IoU threshold {t} outside [0, 1]")));
    }
    let props = index_frames(proposals, "proposals")?;
    let gts = index_frames(gt, "ground truth")?;
    if let Some(id) = props.keys().find(|id| !gts.contains_key(*id)) {
        return Err(Error::invalid(format!(
            "frame {id:?} has proposals but no ground-truth entry"
        )));
    }

    // class -> (instances, covered count per threshold)
    let mut tally: BTreeMap<String, (usize, Vec<usize>)> = BTreeMap::new();
    for g in gt {
        let cands = props
            .get(g.id.as_str())
            .map(|f| f.boxes.as_slice())
            .unwrap_or(&[]);
        for gb in &g.boxes {
            let best = cands
                .iter()
                .map(|p| iou_2d(&p.bbox, &gb.bbox))
                .fold(0.0, f64::max);
            let entry = tally
                .entry(label_of(&gb.bbox).to_string())
                .or_insert_with(|| (0, vec![0; thresholds.len()]));
            entry.0 += 1;
            for (k, &t) in thresholds.iter().enumerate() {
                if best >= t && !cands.is_empty() {
                    entry.1[k] += 1;
                }
            }
        }
    }
    let proposals_per_image = if gt.is_empty() {
        0.0
    } else {
        gt.iter()
            .map(|g| props.get(g.id.as_str()).map_or(0, |f| f.boxes.len()))
            .sum::<usize>() as f64
            / gt.len() as f64
    };
    let mut report = RecallReport {
        classes: Vec::with_capacity(tally.len()),
        thresholds: thresholds.to_vec(),
        recall: Vec::with_capacity(tally.len()),
        instances: Vec::with_capacity(tally.len()),
        proposals_per_image,
    };
    for (class, (total, covered)) in tally {
        report.classes.push(class);
        report.instances.push(total);
        report
            .recall
            .push(covered.iter().map(|&c| c as f64 / total as f64).collect());
    }
    Ok(report)
}

/// Unweighted mean over classes not in `exclude`.
pub fn class_average(per_class: &[(&str, f64)], exclude: &[&str]) -> Result<f64> {
    let kept: Vec<f64> = per_class
        .iter()
        .filter(|(c, _)| !exclude.contains(c))
        .map(|&(_, v)| v)
        .collect();
    if kept.is_empty() {
        return Err(Error::invalid("no classes left to average"));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "lowercase")]
pub enum ProposalLabel {
    Positive(String),
    Background,
    Ignore,
}

pub const POSITIVE_IOU: f64 = 0.5;
pub const BACKGROUND_IOU: f64 = 0.3;

/// One label per proposal box, frame by frame in input order.
pub fn label_proposals(
    proposals: &[FrameBoxes],
    gt: &[FrameBoxes],
) -> Result<Vec<Vec<ProposalLabel>>> {
    let gts = index_frames(gt, "ground truth")?;
    Ok(proposals
        .iter()
        .map(|f| {
            let cands = gts
                .get(f.id.as_str())
                .map(|g| g.boxes.as_slice())
                .unwrap_or(&[]);
            f.boxes
                .iter()
                .map(|p| {
                    let mut best: Option<(f64, &BoundingBox2D)> = None;
                    for g in cands {
                        let iou = iou_2d(&p.bbox, &g.bbox);
                        if best.is_none_or(|(b, _)| iou > b) {
                            best = Some((iou, &g.bbox));
                        }
                    }
                    match best {
                        Some((iou, g)) if iou > POSITIVE_IOU => {
                            ProposalLabel::Positive(label_of(g).to_string())
                        }
                        Some((iou, _)) if iou >= BACKGROUND_IOU => ProposalLabel::Ignore,
                        _ => ProposalLabel::Background,
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub frame_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox2D,
    pub class: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: String,
    /// `None` when the class has no ground-truth instances.
    pub ap: Option<f64>,
    pub gt_count: usize,
    pub detection_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub iou_threshold: f64,
    pub classes: Vec<ClassAp>,
    /// Mean over classes with ground truth; `None` if there are none.
    pub map: Option<f64>,
}

impl ApReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,ap,gt_count,detection_count\n");
        for c in &self.classes {
            let ap =
                c.ap.map_or_else(|| "undefined".to_string(), |v| v.to_string());
            out.push_str(&format!(
                "{},{ap},{},{}\n",
                csv_field(&c.class),
                c.gt_count,
                c.detection_count
            ));
        }
        let map = self
            .map
            .map_or_else(|| "undefined".to_string(), |v| v.to_string());
        out.push_str(&format!("mAP,{map},,\n"));
        out
    }
}

/// Area under the precision/recall curve with all-points interpolation.
fn all_points_ap(tp: &[bool], gt_count: usize) -> f64 {
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        recall.push(hits as f64 / gt_count as f64);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Per-class AP: detections in descending score order each take the
/// best-overlapping unmatched ground truth of their class and frame at IoU ≥
/// `iou_threshold`; anything else is a false positive.
pub fn average_precision(
    dets: &[ScoredDetection],
    gt: &[FrameBoxes],
    iou_threshold: f64,
) -> Result<ApReport> {
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite detection score in frame {:?}",
            d.frame_id
        )));
    }
    index_frames(gt, "ground truth")?;
    // class -> frame -> gt boxes
    let mut gt_by_class: BTreeMap<&str, HashMap<&str, Vec<&BoundingBox2D>>> = BTreeMap::new();
    for f in gt {
        for b in &f.boxes {
            gt_by_class
                .entry(label_of(&b.bbox))
                .or_default()
                .entry(f.id.as_str())
                .or_default()
                .push(&b.bbox);
        }
    }
    let mut dets_by_class: BTreeMap<&str, Vec<&ScoredDetection>> = BTreeMap::new();
    for d in dets {
        dets_by_class.entry(d.class.as_str()).or_default().push(d);
    }
    let mut classes: Vec<&str> = gt_by_class
        .keys()
        .chain(dets_by_class.keys())
        .copied()
        .collect();
    classes.sort_unstable();
    classes.dedup();

    let mut out = Vec::with_capacity(classes.len());
    for class in classes {
        let frames = gt_by_class.get(class);
        let gt_count = frames.map_or(0, |m| m.values().map(Vec::len).sum());
        let mut ds = dets_by_class.get(class).cloned().unwrap_or_default();
        ds.sort_by(|a, b| b.score.total_cmp(&a.score));
        let ap = (gt_count > 0).then(|| {
            let mut matched: HashMap<&str, Vec<bool>> = frames
                .unwrap()
                .iter()
                .map(|(k, v)| (*k, vec![false; v.len()]))
                .collect();
            let tp: Vec<bool> = ds
                .iter()
                .map(|d| {
                    let Some(boxes) = frames.unwrap().get(d.frame_id.as_str()) else {
                        return false;
                    };
                    let used = matched.get_mut(d.frame_id.as_str()).unwrap();
                    let mut best: Option<(usize, f64)> = None;
                    for (k, g) in boxes.iter().enumerate() {
                        let iou = iou_2d(&d.bbox, g);
                        if !used[k] && iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                            best = Some((k, iou));
                        }
                    }
                    best.map(|(k, _)| used[k] = true).is_some()
                })
                .collect();
            all_points_ap(&tp, gt_count)
        });
        out.push(ClassAp {
            class: class.to_string(),
            ap,
            gt_count,
            detection_count: ds.len(),
        });
    }
    let defined: Vec<f64> = out.iter().filter_map(|c| c.ap).collect();
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ApReport {
        iou_threshold,
        classes: out,
        map,
    })
}
