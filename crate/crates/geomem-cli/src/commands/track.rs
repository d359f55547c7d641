//! Run the pipeline and associate the surviving detections into tracks,
//! either in GPS space (the default) or with the image-space baseline.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use geomem::io::{self, TrackRow};
use geomem::tracking::{PixelTracker, Tracker};
use geomem::vod::{GeoDetection, VodPipeline};

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct TrackArgs {
    /// Telemetry JSONL (one camera pose per frame).
    #[arg(long, value_name = "FILE")]
    pub telemetry: PathBuf,
    /// Detections JSONL (one record per frame).
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Output CSV of per-frame track rows.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Fitted size model JSON; enables the implausible-size filter.
    #[arg(long, value_name = "FILE")]
    pub size_model: Option<PathBuf>,
    /// Disable confidence boosting (baseline mode; maps still update).
    #[arg(long)]
    pub no_boost: bool,
    /// Associate by nearest pixel instead of nearest ground position.
    #[arg(long)]
    pub pixel_baseline: bool,
    /// Write track polylines as a GeoJSON FeatureCollection (GPS mode only).
    #[arg(long, value_name = "FILE")]
    pub geojson: Option<PathBuf>,
}

fn row_for(frame_id: u64, det: &GeoDetection, track_id: u64) -> TrackRow {
    let position = det.position();
    TrackRow {
        frame_id,
        track_id,
        x1: det.detection.x1,
        y1: det.detection.y1,
        x2: det.detection.x2,
        y2: det.detection.y2,
        conf: det.boosted_confidence,
        class_id: det.detection.class_id,
        lat: position.map(|p| p.lat_deg),
        lon: position.map(|p| p.lon_deg),
    }
}

pub fn run(args: &TrackArgs, globals: &Globals) -> Result<(), CmdError> {
    if args.pixel_baseline && args.geojson.is_some() {
        return Err(CmdError::Validation(
            "--geojson requires GPS tracking; the pixel baseline has no ground positions".into(),
        ));
    }

    let mut vod_config = globals.config.vod.clone();
    if args.no_boost {
        vod_config.boost_enabled = false;
    }

    let frames = io::read_stream(&args.telemetry, &args.detections)?;
    let mut pipeline = VodPipeline::new(vod_config)?;
    if let Some(path) = &args.size_model {
        pipeline = pipeline.with_size_model(super::vod::load_size_model(path)?);
    }

    let mut gps_tracker = Tracker::new(globals.config.tracker.clone());
    let mut pixel_tracker = PixelTracker::new(globals.config.pixel_tracker.clone());
    let mut rows: Vec<TrackRow> = Vec::new();
    for frame in &frames {
        let result = pipeline.process_frame(frame.frame_id, &frame.cam, &frame.detections)?;
        let assignments = if args.pixel_baseline {
            pixel_tracker.step(&result.final_detections)
        } else {
            gps_tracker.step(frame.frame_id, &result.final_detections)
        };
        for (det_index, track_id) in assignments {
            rows.push(row_for(frame.frame_id, &result.final_detections[det_index], track_id));
        }
    }
    io::write_track_csv(&args.out, &rows)?;

    if let Some(path) = &args.geojson {
        super::write_pretty_json(path, &io::geojson_tracks(gps_tracker.tracks()))?;
    }

    let track_count =
        rows.iter().map(|r| r.track_id).collect::<std::collections::BTreeSet<_>>().len();
    super::print_summary(&json!({
        "frames": frames.len(),
        "rows": rows.len(),
        "tracks": track_count,
        "mode": if args.pixel_baseline { "pixel" } else { "gps" },
        "out": args.out.display().to_string(),
    }));
    Ok(())
}
