//! Aggregate per-frame heatmaps into a georeferenced anomaly map and
//! extract persistent regions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use geomem::anomaly::AnomalyAggregator;
use geomem::camera::CameraState;
use geomem::io::{self, HeatmapIndexEntry, TelemetryRecord};

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct AnomalyArgs {
    /// Telemetry JSONL (one camera pose per frame).
    #[arg(long, value_name = "FILE")]
    pub telemetry: PathBuf,
    /// Heatmap index JSONL; frame files are relative to the index.
    #[arg(long, value_name = "FILE")]
    pub heatmaps: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

pub fn run(args: &AnomalyArgs, globals: &Globals) -> Result<(), CmdError> {
    let telemetry: Vec<TelemetryRecord> = io::read_jsonl(&args.telemetry)?;
    let mut cameras: BTreeMap<u64, CameraState> = BTreeMap::new();
    for record in &telemetry {
        let cam = record.camera().map_err(|e| {
            CmdError::Validation(format!("frame {}: bad camera: {e}", record.frame_id))
        })?;
        if cameras.insert(record.frame_id, cam).is_some() {
            return Err(CmdError::Validation(format!(
                "duplicate telemetry for frame {}",
                record.frame_id
            )));
        }
    }

    let mut entries: Vec<HeatmapIndexEntry> = io::read_jsonl(&args.heatmaps)?;
    entries.sort_by_key(|e| e.frame_id);
    let index_dir = args.heatmaps.parent().unwrap_or(Path::new("."));

    let first_frame = entries
        .first()
        .ok_or_else(|| CmdError::Validation("heatmap index is empty".into()))?
        .frame_id;
    let initial_center = cameras
        .get(&first_frame)
        .ok_or_else(|| {
            CmdError::Validation(format!("no telemetry for heatmap frame {first_frame}"))
        })?
        .position();

    let mut agg = AnomalyAggregator::new(globals.config.anomaly.clone(), initial_center)?;
    let mut cells_projected = 0usize;
    for entry in &entries {
        let cam = cameras.get(&entry.frame_id).ok_or_else(|| {
            CmdError::Validation(format!("no telemetry for heatmap frame {}", entry.frame_id))
        })?;
        let heatmap = io::read_heatmap(index_dir, entry)?;
        let stats = agg.step(cam, &heatmap)?;
        cells_projected += stats.cells_projected;
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CmdError::io_at(&args.out_dir, e))?;
    let regions = agg.regions();
    super::write_pretty_json(
        &args.out_dir.join("regions.geojson"),
        &io::geojson_regions(&regions),
    )?;
    io::write_map(&args.out_dir.join("anomaly.map"), agg.map())?;

    super::print_summary(&json!({
        "frames": entries.len(),
        "cells_projected": cells_projected,
        "regions": regions.len(),
        "out_dir": args.out_dir.display().to_string(),
    }));
    Ok(())
}
