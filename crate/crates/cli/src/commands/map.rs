//! `wshare map`: per-class AP and mAP from line-delimited detections.

use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;
use wshare::detmetrics::{mean_ap, parse_detections, parse_ground_truths, ApConfig, Interpolation, MapResult};

use crate::cli::{InterpolationArg, MapArgs};
use crate::manifest::RunManifest;
use crate::output::{read_text, write_json};

pub const SCHEMA: &str = "wshare.map.v1";

#[derive(Debug, Serialize)]
pub struct MapReport {
    pub schema: &'static str,
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub result: MapResult,
}

pub fn run(args: &MapArgs, out: &mut dyn Write) -> Result<bool> {
    let mut manifest = RunManifest::new("map", serde_json::to_value(args)?, None);
    let gt_text = read_text(&args.gt)?;
    manifest.add_input("ground-truth", Some(&args.gt), gt_text.as_bytes());
    let det_text = read_text(&args.dets)?;
    manifest.add_input("detections", Some(&args.dets), det_text.as_bytes());
    let gts = parse_ground_truths(&gt_text).with_context(|| format!("parsing {}", args.gt.display()))?;
    let dets = parse_detections(&det_text).with_context(|| format!("parsing {}", args.dets.display()))?;
    let cfg = ApConfig {
        iou_threshold: args.iou,
        interpolation: match args.interpolation {
            InterpolationArg::AllPoint => Interpolation::AllPoint,
            InterpolationArg::ElevenPoint => Interpolation::ElevenPoint,
        },
        min_confidence: args.min_confidence,
    };
    let classes = (!args.classes.is_empty()).then_some(args.classes.as_slice());
    let result = mean_ap(&dets, &gts, classes, &cfg)?;
    for c in &result.per_class {
        writeln!(out, "class {:>4}: AP {:.4} ({} gt, {} det, {} tp)", c.class_id, c.ap, c.ground_truths, c.detections, c.true_positives)?;
    }
    writeln!(out, "mAP {:.4} over {} classes", result.map, result.per_class.len())?;
    if let Some(p) = &args.json {
        write_json(p, &MapReport { schema: SCHEMA, manifest, result })?;
    }
    Ok(true)
}
