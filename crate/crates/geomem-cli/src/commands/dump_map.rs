//! Export a serialized memory map as CSV rows or a GeoJSON point grid for
//! plotting.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;

use geomem::io;
use geomem::map::MemoryMap;

use crate::error::CmdError;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DumpFormat {
    Csv,
    Geojson,
}

#[derive(Args)]
pub struct DumpMapArgs {
    /// Serialized map file (as written by `vod --dump-maps` or `anomaly`).
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = DumpFormat::Csv)]
    pub format: DumpFormat,
    /// Emit only cells with value strictly above this.
    #[arg(long, default_value_t = 0.0)]
    pub min_value: f32,
    /// Write here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Cells above the cutoff as (row, col, position, value), row-major.
fn live_cells(map: &MemoryMap, min_value: f32) -> Vec<(usize, usize, f64, f64, f32)> {
    let n = map.n();
    let mut out = Vec::new();
    for row in 0..n {
        for col in 0..n {
            let value = map.cells()[row * n + col];
            if value > min_value {
                let position = map.cell_position(row, col);
                out.push((row, col, position.lat_deg, position.lon_deg, value));
            }
        }
    }
    out
}

fn render_csv(cells: &[(usize, usize, f64, f64, f32)]) -> String {
    let mut text = String::from("row,col,lat,lon,value\n");
    for (row, col, lat, lon, value) in cells {
        text.push_str(&format!("{row},{col},{lat:.9},{lon:.9},{value}\n"));
    }
    text
}

fn render_geojson(cells: &[(usize, usize, f64, f64, f32)]) -> String {
    let features: Vec<serde_json::Value> = cells
        .iter()
        .map(|(row, col, lat, lon, value)| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [lon, lat] },
                "properties": { "row": row, "col": col, "value": value },
            })
        })
        .collect();
    let collection = json!({ "type": "FeatureCollection", "features": features });
    let mut text = serde_json::to_string_pretty(&collection).expect("geojson serializes");
    text.push('\n');
    text
}

pub fn run(args: &DumpMapArgs) -> Result<(), CmdError> {
    let map = io::read_map(&args.map)?;
    let cells = live_cells(&map, args.min_value);
    let text = match args.format {
        DumpFormat::Csv => render_csv(&cells),
        DumpFormat::Geojson => render_geojson(&cells),
    };
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CmdError::io_at(path, e))?,
        None => {
            // Large dumps go through a locked writer in one call. A closed
            // pipe means the reader has all it wanted; other failures are
            // real I/O errors.
            let stdout = std::io::stdout();
            let mut handle = stdout.lock();
            match handle.write_all(text.as_bytes()) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                Err(e) => return Err(CmdError::Io(format!("stdout: {e}"))),
            }
        }
    }
    Ok(())
}
