//! Run several telemetry + detection streams cooperatively: each stream's
//! confidences are boosted from the fused memory of all streams, and one
//! shared tracker assigns globally unique track ids.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use geomem::fusion::{self, CooperativeRunner, StreamFrame};
use geomem::io::{self, TrackRow};
use geomem::vod::FrameResult;

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct FuseArgs {
    /// One stream as TELEMETRY,DETECTIONS; repeat per stream. The first
    /// stream provides the reference timeline.
    #[arg(long = "stream", value_name = "TELEMETRY,DETECTIONS", required = true)]
    pub streams: Vec<String>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Fitted size model JSON, applied to every stream.
    #[arg(long, value_name = "FILE")]
    pub size_model: Option<PathBuf>,
}

pub fn run(args: &FuseArgs, globals: &Globals) -> Result<(), CmdError> {
    let mut stream_frames: Vec<Vec<StreamFrame>> = Vec::with_capacity(args.streams.len());
    for spec in &args.streams {
        let Some((telemetry, detections)) = spec.split_once(',') else {
            return Err(CmdError::Validation(format!(
                "--stream expects TELEMETRY,DETECTIONS, got {spec:?}"
            )));
        };
        stream_frames.push(io::read_stream(telemetry.as_ref(), detections.as_ref())?);
    }

    let timestamps: Vec<Vec<i64>> =
        stream_frames.iter().map(|frames| frames.iter().map(|f| f.ts_us).collect()).collect();
    let pairing = fusion::pair_streams(&timestamps, globals.config.pairing_tolerance_us)?;

    let mut runner =
        CooperativeRunner::new(globals.config.fusion_config(), stream_frames.len())?;
    if let Some(path) = &args.size_model {
        let model = super::vod::load_size_model(path)?;
        for stream in 0..stream_frames.len() {
            runner.set_size_model(stream, model.clone());
        }
    }

    let mut results: Vec<Vec<FrameResult>> = vec![Vec::new(); stream_frames.len()];
    let mut rows: Vec<Vec<TrackRow>> = vec![Vec::new(); stream_frames.len()];
    for group_index in 0..pairing[0].len() {
        let group: Vec<StreamFrame> = (0..stream_frames.len())
            .map(|s| stream_frames[s][pairing[s][group_index]].clone())
            .collect();
        for step in runner.step_group(&group)? {
            for &(det_index, track_id) in &step.track_assignments {
                let det = &step.result.final_detections[det_index];
                let position = det.position();
                rows[step.stream].push(TrackRow {
                    frame_id: step.result.frame_id,
                    track_id,
                    x1: det.detection.x1,
                    y1: det.detection.y1,
                    x2: det.detection.x2,
                    y2: det.detection.y2,
                    conf: det.boosted_confidence,
                    class_id: det.detection.class_id,
                    lat: position.map(|p| p.lat_deg),
                    lon: position.map(|p| p.lon_deg),
                });
            }
            results[step.stream].push(step.result);
        }
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CmdError::io_at(&args.out_dir, e))?;
    let mut files = Vec::new();
    for (stream, (stream_results, stream_rows)) in results.iter().zip(&rows).enumerate() {
        let results_path = args.out_dir.join(format!("stream{stream}_results.jsonl"));
        let tracks_path = args.out_dir.join(format!("stream{stream}_tracks.csv"));
        io::write_jsonl(&results_path, stream_results)?;
        io::write_track_csv(&tracks_path, stream_rows)?;
        files.push(results_path.display().to_string());
        files.push(tracks_path.display().to_string());
    }
    let geojson_path = args.out_dir.join("tracks.geojson");
    super::write_pretty_json(&geojson_path, &io::geojson_tracks(runner.tracker().tracks()))?;
    files.push(geojson_path.display().to_string());

    super::print_summary(&json!({
        "streams": stream_frames.len(),
        "paired_groups": pairing[0].len(),
        "tracks": runner.tracker().tracks().len(),
        "files": files,
    }));
    Ok(())
}
