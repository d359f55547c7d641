//! Score pipeline output against simulator ground truth: detection
//! precision/recall/F1, AP at IoU 0.5, average recall, and (given track
//! rows) identity switches and fragmentations.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use geomem::eval::{self, GtBox, GtPoint, PredBox, TrackPoint};
use geomem::geodesy::GeoPoint;
use geomem::io::{self, GtRecord};
use geomem::vod::FrameResult;

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct EvalArgs {
    /// Per-frame pipeline results JSONL (as written by `vod`).
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Ground-truth JSONL (as written by `simulate`).
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// IoU threshold for detection matching.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Detections per frame kept (by score) for average recall.
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    /// Track rows CSV (as written by `track` or `fuse`); enables tracking
    /// metrics.
    #[arg(long, value_name = "FILE")]
    pub tracks: Option<PathBuf>,
    /// Ground-distance gate for matching track rows to objects, meters.
    #[arg(long, default_value_t = 5.0)]
    pub max_dist_m: f64,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Flattens pipeline results into score-carrying prediction boxes.
fn pred_boxes(results: &[FrameResult]) -> Vec<PredBox> {
    results
        .iter()
        .flat_map(|r| {
            r.final_detections.iter().map(move |d| PredBox {
                frame_id: r.frame_id,
                x1: d.detection.x1,
                y1: d.detection.y1,
                x2: d.detection.x2,
                y2: d.detection.y2,
                class_id: d.detection.class_id,
                score: d.boosted_confidence,
            })
        })
        .collect()
}

/// Flattens ground-truth records into boxes; only in-view objects count.
fn gt_boxes(records: &[GtRecord]) -> Vec<GtBox> {
    records
        .iter()
        .flat_map(|r| {
            r.objects.iter().filter(|o| o.in_view).map(move |o| GtBox {
                frame_id: r.frame_id,
                x1: o.x1,
                y1: o.y1,
                x2: o.x2,
                y2: o.y2,
                class_id: o.class_id,
                object: o.object,
            })
        })
        .collect()
}

pub fn run(args: &EvalArgs, globals: &Globals) -> Result<(), CmdError> {
    let _ = globals;
    let results: Vec<FrameResult> = io::read_jsonl(&args.pred)?;
    let gt_records: Vec<GtRecord> = io::read_jsonl(&args.gt)?;

    let preds = pred_boxes(&results);
    let gts = gt_boxes(&gt_records);
    let prf = eval::detection_prf(&preds, &gts, args.iou);
    let ap50 = eval::average_precision(&preds, &gts, 0.5);
    let mean_recall = eval::mean_recall(&preds, &gts, args.top_k);

    let tracking = match &args.tracks {
        Some(path) => {
            let rows = io::read_track_csv(path)?;
            let track_points: Vec<TrackPoint> = rows
                .iter()
                .filter_map(|r| {
                    let (lat, lon) = (r.lat?, r.lon?);
                    Some(TrackPoint {
                        frame_id: r.frame_id,
                        track_id: r.track_id,
                        position: GeoPoint::new(lat, lon),
                    })
                })
                .collect();
            let gt_points: Vec<GtPoint> = gt_records
                .iter()
                .flat_map(|r| {
                    r.objects.iter().filter(|o| o.in_view).map(move |o| GtPoint {
                        frame_id: r.frame_id,
                        object: o.object,
                        position: GeoPoint::new(o.lat, o.lon),
                    })
                })
                .collect();
            let score = eval::tracking_score(&track_points, &gt_points, args.max_dist_m);
            serde_json::to_value(score)
                .map_err(|e| CmdError::Validation(format!("serializing tracking score: {e}")))?
        }
        None => serde_json::Value::Null,
    };

    let report = json!({
        "detection": {
            "true_positives": prf.true_positives,
            "false_positives": prf.false_positives,
            "false_negatives": prf.false_negatives,
            "precision": prf.precision,
            "recall": prf.recall,
            "f1": prf.f1,
            "ap50": ap50,
            "mean_recall": mean_recall,
            "iou": args.iou,
            "top_k": args.top_k,
        },
        "tracking": tracking,
    });

    match &args.out {
        Some(path) => super::write_pretty_json(path, &report)?,
        None => super::print_summary(&report),
    }
    Ok(())
}
