//! Measure single-threaded throughput of the two hot paths: full
//! `process_frame` calls under a heavy pre-NMS load, and dense heatmap
//! projection into the anomaly map.

use clap::Args;
use serde_json::json;

use geomem::bench;

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct BenchArgs {
    /// Timed pipeline frames (after a short warmup).
    #[arg(long, default_value_t = 150)]
    pub frames: usize,
    /// Pre-NMS detections fed to every pipeline frame.
    #[arg(long, default_value_t = 2000)]
    pub dets_per_frame: usize,
    /// Timed heatmap-projection frames.
    #[arg(long, default_value_t = 300)]
    pub heatmap_frames: usize,
}

pub fn run(args: &BenchArgs, globals: &Globals) -> Result<(), CmdError> {
    let seed = globals.seed.unwrap_or(7);
    let pipeline = bench::bench_pipeline(args.frames, args.dets_per_frame, seed)?;
    let heatmap = bench::bench_heatmap(args.heatmap_frames, seed)?;
    let reports = [
        serde_json::to_value(&pipeline),
        serde_json::to_value(&heatmap),
    ]
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| CmdError::Validation(format!("serializing bench report: {e}")))?;
    super::print_summary(&json!(reports));
    Ok(())
}
