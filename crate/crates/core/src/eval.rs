//! COCO-protocol instance evaluation: greedy IoU matching, 101-point
//! interpolated average precision at IoU thresholds 0.50:0.05:0.95, at most
//! 100 detections per image, a single "all" area range.
//!
//! Equal scores keep their input order everywhere, so results do not
//! depend on sort stability quirks. Mask IoU runs directly on RLE run lists.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{BBox, RleError, RleMask};
use crate::coco_io::{CocoDataset, Detection};

pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];
pub const RECALL_POINTS: usize = 101;
pub const MAX_DETS_PER_IMAGE: usize = 100;

const AP50_INDEX: usize = 0;
const AP75_INDEX: usize = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("segm evaluation needs a mask on every detection; detection {index} has none")]
    MissingMask { index: usize },
    #[error("detection {index}: {source}")]
    Mask {
        index: usize,
        #[source]
        source: RleError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Bbox,
    Segm,
}

impl IouKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IouKind::Bbox => "bbox",
            IouKind::Segm => "segm",
        }
    }
}

/// Box IoU over continuous areas; 0 when the union is empty.
pub fn iou_bbox(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Mask IoU from run lists; 0 when both masks are empty.
pub fn iou_mask(a: &RleMask, b: &RleMask) -> Result<f64, RleError> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Outcome of matching one image's detections at one threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Matched ground-truth index for each detection, in detection order.
    pub matches: Vec<Option<usize>>,
    pub unmatched_gt: usize,
}

impl MatchResult {
    pub fn is_tp(&self, det: usize) -> bool {
        self.matches[det].is_some()
    }
}

/// Greedy matching. `ious[d][g]` is the IoU of detection `d` (already in
/// descending score order) with ground truth `g`. Each detection takes the
/// still-unmatched ground truth of highest IoU at or above `threshold`,
/// the lowest index winning IoU ties.
pub fn match_detections(ious: &[Vec<f64>], n_gt: usize, threshold: f64) -> MatchResult {
    let mut taken = vec![false; n_gt];
    let matches = ious
        .iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &iou) in row.iter().enumerate() {
                if taken[g] || iou < threshold {
                    continue;
                }
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect();
    MatchResult {
        matches,
        unmatched_gt: taken.iter().filter(|t| !**t).count(),
    }
}

/// One pooled detection outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabel {
    pub score: f64,
    /// Position in the input detection list; breaks score ties.
    pub order: usize,
    pub tp: bool,
}

fn by_score_then_order(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// 101-point interpolated AP; `None` when there is no ground truth.
pub fn average_precision(labels: &[ScoredLabel], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| by_score_then_order(&(a.score, a.order), &(b.score, b.order)));
    let mut recall = Vec::with_capacity(sorted.len());
    let mut precision = Vec::with_capacity(sorted.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for l in &sorted {
        if l.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / total_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // Interpolate: precision at recall r becomes the max precision at any
    // recall >= r.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut sum = 0.0;
    let mut idx = 0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        while idx < recall.len() && recall[idx] < r {
            idx += 1;
        }
        if idx < recall.len() {
            sum += precision[idx];
        }
    }
    Some(sum / RECALL_POINTS as f64)
}

/// AP at each threshold plus the summary numbers for one IoU kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub kind: IouKind,
    pub per_threshold: Vec<Option<f64>>,
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
}

/// The six headline metrics. Serialized keys are in fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "bbox_mAP")]
    pub bbox_map: Option<f64>,
    #[serde(rename = "bbox_mAP_50")]
    pub bbox_map_50: Option<f64>,
    #[serde(rename = "bbox_mAP_75")]
    pub bbox_map_75: Option<f64>,
    #[serde(rename = "segm_mAP")]
    pub segm_map: Option<f64>,
    #[serde(rename = "segm_mAP_50")]
    pub segm_map_50: Option<f64>,
    #[serde(rename = "segm_mAP_75")]
    pub segm_map_75: Option<f64>,
}

impl EvalReport {
    pub fn from_kinds(bbox: Option<&KindMetrics>, segm: Option<&KindMetrics>) -> Self {
        Self {
            bbox_map: bbox.and_then(|m| m.map),
            bbox_map_50: bbox.and_then(|m| m.ap50),
            bbox_map_75: bbox.and_then(|m| m.ap75),
            segm_map: segm.and_then(|m| m.map),
            segm_map_50: segm.and_then(|m| m.ap50),
            segm_map_75: segm.and_then(|m| m.ap75),
        }
    }

    /// `(name, value)` in the fixed column order.
    pub fn columns(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("bbox_mAP", self.bbox_map),
            ("bbox_mAP_50", self.bbox_map_50),
            ("bbox_mAP_75", self.bbox_map_75),
            ("segm_mAP", self.segm_map),
            ("segm_mAP_50", self.segm_map_50),
            ("segm_mAP_75", self.segm_map_75),
        ]
    }

    /// Fixed-width text table, 4 decimals.
    pub fn table(&self) -> String {
        let cols = self.columns();
        let header: Vec<String> = cols.iter().map(|(n, _)| format!("{n:>12}")).collect();
        let values: Vec<String> = cols
            .iter()
            .map(|(_, v)| match v {
                Some(x) => format!("{x:>12.4}"),
                None => format!("{:>12}", "n/a"),
            })
            .collect();
        format!("{}\n{}\n", header.join(" "), values.join(" "))
    }
}

/// Category, ranked `(input index, score)` pairs, IoU matrix, GT count.
type KeyOutcome = (u64, Vec<(usize, f64)>, Vec<Vec<f64>>, usize);

fn pairwise_ious(
    dets: &[(usize, &Detection)],
    gts: &[&crate::annotate::InstanceAnnotation],
    kind: IouKind,
) -> Result<Vec<Vec<f64>>, EvalError> {
    dets.iter()
        .map(|&(index, d)| {
            gts.iter()
                .map(|g| match kind {
                    IouKind::Bbox => Ok(iou_bbox(&d.bbox, &g.bbox)),
                    IouKind::Segm => {
                        let mask = d
                            .segmentation
                            .as_ref()
                            .ok_or(EvalError::MissingMask { index })?;
                        iou_mask(mask, &g.segmentation)
                            .map_err(|source| EvalError::Mask { index, source })
                    }
                })
                .collect()
        })
        .collect()
}

/// Metrics for one IoU kind. Detections of categories absent from the
/// ground truth are ignored; per-threshold AP is averaged over categories
/// that have ground truth.
pub fn evaluate_kind(
    gt: &CocoDataset,
    dets: &[Detection],
    kind: IouKind,
) -> Result<KindMetrics, EvalError> {
    if kind == IouKind::Segm {
        if let Some(index) = dets.iter().position(|d| d.segmentation.is_none()) {
            return Err(EvalError::MissingMask { index });
        }
    }
    let mut category_ids: Vec<u64> = gt.categories.iter().map(|c| c.id).collect();
    category_ids.sort_unstable();
    let mut image_ids: Vec<u64> = gt.images.iter().map(|i| i.id).collect();
    image_ids.sort_unstable();

    let mut gts_by_key: HashMap<(u64, u64), Vec<&crate::annotate::InstanceAnnotation>> =
        HashMap::new();
    for a in &gt.annotations {
        gts_by_key
            .entry((a.image_id, a.category_id))
            .or_default()
            .push(a);
    }
    let mut dets_by_key: HashMap<(u64, u64), Vec<(usize, &Detection)>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        dets_by_key
            .entry((d.image_id, d.category_id))
            .or_default()
            .push((i, d));
    }

    let keys: Vec<(u64, u64)> = category_ids
        .iter()
        .flat_map(|&c| image_ids.iter().map(move |&i| (i, c)))
        .collect();

    // Per (image, category): ranked, capped detections, their IoU matrix,
    // and the ground-truth count.
    let per_key: Vec<KeyOutcome> = keys
        .par_iter()
        .map(|&(image_id, cat)| {
            let gts = gts_by_key
                .get(&(image_id, cat))
                .cloned()
                .unwrap_or_default();
            let mut ds = dets_by_key
                .get(&(image_id, cat))
                .cloned()
                .unwrap_or_default();
            ds.sort_by(|a, b| by_score_then_order(&(a.1.score, a.0), &(b.1.score, b.0)));
            ds.truncate(MAX_DETS_PER_IMAGE);
            let ious = pairwise_ious(&ds, &gts, kind)?;
            let ranked = ds.iter().map(|(i, d)| (*i, d.score)).collect();
            Ok((cat, ranked, ious, gts.len()))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut labels: BTreeMap<u64, Vec<Vec<ScoredLabel>>> = BTreeMap::new();
    let mut total_gt: BTreeMap<u64, usize> = BTreeMap::new();
    for &c in &category_ids {
        labels.insert(c, vec![Vec::new(); IOU_THRESHOLDS.len()]);
        total_gt.insert(c, 0);
    }
    for (cat, ranked, ious, n_gt) in &per_key {
        *total_gt.get_mut(cat).expect("known category") += n_gt;
        let per_t = labels.get_mut(cat).expect("known category");
        for (t, &threshold) in IOU_THRESHOLDS.iter().enumerate() {
            let m = match_detections(ious, *n_gt, threshold);
            for (d, &(order, score)) in ranked.iter().enumerate() {
                per_t[t].push(ScoredLabel {
                    score,
                    order,
                    tp: m.is_tp(d),
                });
            }
        }
    }

    let per_threshold: Vec<Option<f64>> = (0..IOU_THRESHOLDS.len())
        .map(|t| {
            let aps: Vec<f64> = category_ids
                .iter()
                .filter_map(|c| average_precision(&labels[c][t], total_gt[c]))
                .collect();
            (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
        })
        .collect();
    let defined: Vec<f64> = per_threshold.iter().flatten().copied().collect();
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(KindMetrics {
        kind,
        ap50: per_threshold[AP50_INDEX],
        ap75: per_threshold[AP75_INDEX],
        per_threshold,
        map,
    })
}

/// Both kinds.
pub fn evaluate(gt: &CocoDataset, dets: &[Detection]) -> Result<EvalReport, EvalError> {
    let bbox = evaluate_kind(gt, dets, IouKind::Bbox)?;
    let segm = evaluate_kind(gt, dets, IouKind::Segm)?;
    Ok(EvalReport::from_kinds(Some(&bbox), Some(&segm)))
}
