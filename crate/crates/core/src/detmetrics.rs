//! Detection metrics: IoU, per-class average precision, mAP and trailing
//! confidence smoothing across video frames.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no classes to average over")]
    EmptyClassSet,
    #[error("frame {frame} has {got} values, expected {expected}")]
    ShapeMismatch { frame: usize, expected: usize, got: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox { x_min, y_min, x_max, y_max }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0.0, 0.1, ..., 1.0.
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApConfig {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    /// Detections below this confidence are dropped before matching.
    pub min_confidence: Option<f64>,
}

impl Default for ApConfig {
    fn default() -> Self {
        ApConfig { iou_threshold: 0.5, interpolation: Interpolation::AllPoint, min_confidence: None }
    }
}

/// Default confidence cut for thresholded pipelines.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub ap: f64,
    pub ground_truths: usize,
    pub detections: usize,
    pub true_positives: usize,
    /// False when the class has no ground truths and `ap` is a placeholder 0.
    pub defined: bool,
    /// `(recall, precision)` after each ranked detection.
    #[serde(skip)]
    pub curve: Vec<(f64, f64)>,
}

/// Average precision for one class with greedy matching: in descending
/// confidence order, each detection claims the highest-IoU unmatched ground
/// truth of its class and image, if that IoU reaches the threshold.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], class_id: u32, cfg: &ApConfig) -> ClassAp {
    let mut by_image: BTreeMap<&str, Vec<(&BBox, bool)>> = BTreeMap::new();
    let mut n_gt = 0;
    for g in gts.iter().filter(|g| g.class_id == class_id) {
        by_image.entry(g.image_id.as_str()).or_default().push((&g.bbox, false));
        n_gt += 1;
    }
    let mut ranked: Vec<&Detection> = dets
        .iter()
        .filter(|d| d.class_id == class_id && cfg.min_confidence.is_none_or(|t| d.confidence >= t))
        .collect();
    // Stable sort keeps input order among equal confidences.
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    for (rank, d) in ranked.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        if let Some(cands) = by_image.get(d.image_id.as_str()) {
            for (i, (b, matched)) in cands.iter().enumerate() {
                if *matched {
                    continue;
                }
                let o = iou(&d.bbox, b);
                if o >= cfg.iou_threshold && best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((i, o));
                }
            }
        }
        if let Some((i, _)) = best {
            by_image.get_mut(d.image_id.as_str()).unwrap()[i].1 = true;
            tp += 1;
        }
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        curve.push((recall, tp as f64 / (rank + 1) as f64));
    }

    let ap = if n_gt == 0 { 0.0 } else { interpolate(&curve, cfg.interpolation) };
    ClassAp {
        class_id,
        ap,
        ground_truths: n_gt,
        detections: ranked.len(),
        true_positives: tp,
        defined: n_gt > 0,
        curve,
    }
}

fn interpolate(curve: &[(f64, f64)], mode: Interpolation) -> f64 {
    // Envelope: precision at recall r is the max precision at any recall >= r.
    let mut env: Vec<(f64, f64)> = Vec::with_capacity(curve.len());
    let mut running = 0.0f64;
    for &(r, p) in curve.iter().rev() {
        running = running.max(p);
        env.push((r, running));
    }
    env.reverse();
    match mode {
        Interpolation::AllPoint => {
            let mut prev_r = 0.0;
            let mut area = 0.0;
            for &(r, p) in &env {
                if r > prev_r {
                    area += (r - prev_r) * p;
                    prev_r = r;
                }
            }
            area
        }
        Interpolation::ElevenPoint => {
            (0..=10)
                .map(|t| {
                    let r = t as f64 / 10.0;
                    env.iter().filter(|(rr, _)| *rr >= r - 1e-12).map(|(_, p)| *p).fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub map: f64,
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    pub per_class: Vec<ClassAp>,
}

/// Unweighted mean AP over the classes that have ground truths, optionally
/// restricted to `classes` (for grouped reporting such as person+vehicles).
pub fn mean_ap(dets: &[Detection], gts: &[GroundTruth], classes: Option<&[u32]>, cfg: &ApConfig) -> Result<MapResult> {
    let present: BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    let selected: Vec<u32> = match classes {
        Some(c) => c.iter().copied().filter(|c| present.contains(c)).collect::<BTreeSet<_>>().into_iter().collect(),
        None => present.into_iter().collect(),
    };
    if selected.is_empty() {
        return Err(MetricsError::EmptyClassSet);
    }
    let per_class: Vec<ClassAp> = selected.iter().map(|&c| average_precision(dets, gts, c, cfg)).collect();
    let map = per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64;
    Ok(MapResult { map, iou_threshold: cfg.iou_threshold, interpolation: cfg.interpolation, per_class })
}

/// Element-wise mean of each frame with up to `window - 1` preceding frames.
pub fn smooth_confidences(frames: &[Vec<f64>], window: usize) -> Result<Vec<Vec<f64>>> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != n) {
        return Err(MetricsError::ShapeMismatch { frame: i, expected: n, got: f.len() });
    }
    Ok((0..frames.len())
        .map(|t| {
            let span = &frames[(t + 1).saturating_sub(window)..=t];
            (0..n).map(|e| span.iter().map(|f| f[e]).sum::<f64>() / span.len() as f64).collect()
        })
        .collect())
}

fn parse_fields(line: usize, text: &str, with_conf: bool) -> Result<Option<(String, u32, BBox, Option<f64>)>> {
    let t = text.split('#').next().unwrap_or("").trim();
    if t.is_empty() {
        return Ok(None);
    }
    let f: Vec<&str> = t.split_whitespace().collect();
    let expected = if with_conf { 7 } else { 6 };
    if f.len() != expected && !(f.len() == 7 && !with_conf) {
        return Err(MetricsError::Parse { line, msg: format!("expected {expected} fields, found {}", f.len()) });
    }
    let bad = |what: &str, v: &str| MetricsError::Parse { line, msg: format!("invalid {what} `{v}`") };
    let class_id = f[1].parse::<u32>().map_err(|_| bad("class id", f[1]))?;
    let num = |i: usize| f[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("number", f[i]));
    let bbox = BBox::new(num(2)?, num(3)?, num(4)?, num(5)?);
    if bbox.x_max < bbox.x_min || bbox.y_max < bbox.y_min {
        return Err(MetricsError::Parse { line, msg: "box max corner precedes min corner".into() });
    }
    let conf = if with_conf {
        let c = num(6)?;
        if !(0.0..=1.0).contains(&c) {
            return Err(bad("confidence", f[6]));
        }
        Some(c)
    } else {
        None
    };
    Ok(Some((f[0].to_string(), class_id, bbox, conf)))
}

/// Lines of `image_id class_id x_min y_min x_max y_max`; `#` starts a comment.
pub fn parse_ground_truths(text: &str) -> Result<Vec<GroundTruth>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| parse_fields(i + 1, l, false).transpose())
        .map(|r| r.map(|(image_id, class_id, bbox, _)| GroundTruth { image_id, class_id, bbox }))
        .collect()
}

/// Lines of `image_id class_id x_min y_min x_max y_max confidence`.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| parse_fields(i + 1, l, true).transpose())
        .map(|r| {
            r.map(|(image_id, class_id, bbox, c)| Detection { image_id, class_id, bbox, confidence: c.unwrap() })
        })
        .collect()
}
