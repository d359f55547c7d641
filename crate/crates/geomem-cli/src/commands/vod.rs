//! Run the detection-boosting pipeline over one telemetry + detections
//! stream, writing per-frame results and optional map/GeoJSON artifacts.

use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use geomem::io;
use geomem::size_filter::SizeModel;
use geomem::vod::{FrameResult, VodPipeline};

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct VodArgs {
    /// Telemetry JSONL (one camera pose per frame).
    #[arg(long, value_name = "FILE")]
    pub telemetry: PathBuf,
    /// Detections JSONL (one record per frame).
    #[arg(long, value_name = "FILE")]
    pub detections: PathBuf,
    /// Output JSONL of per-frame results.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Fitted size model JSON; enables the implausible-size filter.
    #[arg(long, value_name = "FILE")]
    pub size_model: Option<PathBuf>,
    /// Disable confidence boosting (baseline mode; maps still update).
    #[arg(long)]
    pub no_boost: bool,
    /// Directory receiving the final per-class memory maps.
    #[arg(long, value_name = "DIR")]
    pub dump_maps: Option<PathBuf>,
    /// Write the surviving detections as a GeoJSON FeatureCollection.
    #[arg(long, value_name = "FILE")]
    pub geojson: Option<PathBuf>,
}

/// Loads a fitted size model from disk.
pub fn load_size_model(path: &Path) -> Result<SizeModel, CmdError> {
    let text = std::fs::read_to_string(path).map_err(|e| CmdError::io_at(path, e))?;
    SizeModel::from_json(&text).map_err(CmdError::from)
}

pub fn run(args: &VodArgs, globals: &Globals) -> Result<(), CmdError> {
    let mut vod_config = globals.config.vod.clone();
    if args.no_boost {
        vod_config.boost_enabled = false;
    }

    let frames = io::read_stream(&args.telemetry, &args.detections)?;
    let mut pipeline = VodPipeline::new(vod_config)?;
    if let Some(path) = &args.size_model {
        pipeline = pipeline.with_size_model(load_size_model(path)?);
    }

    let mut results: Vec<FrameResult> = Vec::with_capacity(frames.len());
    let mut detections_in = 0usize;
    let mut detections_out = 0usize;
    for frame in &frames {
        detections_in += frame.detections.len();
        let result = pipeline.process_frame(frame.frame_id, &frame.cam, &frame.detections)?;
        detections_out += result.final_detections.len();
        results.push(result);
    }
    io::write_jsonl(&args.out, &results)?;

    if let Some(path) = &args.geojson {
        let located: Vec<_> = results
            .iter()
            .flat_map(|r| r.final_detections.iter().map(|d| (r.frame_id, *d)))
            .collect();
        super::write_pretty_json(path, &io::geojson_detections(&located))?;
    }
    if let Some(dir) = &args.dump_maps {
        std::fs::create_dir_all(dir).map_err(|e| CmdError::io_at(dir, e))?;
        for (class_id, map) in pipeline.maps() {
            io::write_map(&dir.join(format!("class_{class_id}.map")), map)?;
        }
    }

    log::info!("processed {} frames", results.len());
    super::print_summary(&json!({
        "frames": results.len(),
        "detections_in": detections_in,
        "final_detections": detections_out,
        "boost_enabled": pipeline.config().boost_enabled,
        "out": args.out.display().to_string(),
    }));
    Ok(())
}
