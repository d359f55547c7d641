//! File formats for the command-line tools.
//!
//! Everything on disk is line-oriented or raw little-endian:
//!
//! * telemetry — JSONL, one camera pose per frame;
//! * detections — JSONL, one record per frame with `[x1, y1, x2, y2,
//!   class_id, confidence]` rows;
//! * ground truth — JSONL written by the simulator, one record per frame;
//! * track output — headed CSV, one row per (frame, track, box);
//! * size samples — headed CSV of (class, distance, diameter) points;
//! * heatmaps — a JSONL index naming one raw `f32` little-endian file per
//!   frame;
//! * memory maps — the map's own header-plus-cells byte format;
//! * GeoJSON — overlay exports for detections, tracks, and regions.
//!
//! Errors distinguish transport failures (missing/unreadable files) from
//! malformed content so callers can exit with the right status code.

use crate::anomaly::{AnomalyRegion, FrameHeatmap};
use crate::camera::CameraState;
use crate::fusion::StreamFrame;
use crate::geodesy::GeoPoint;
use crate::map::MemoryMap;
use crate::size_filter::SizePoint;
use crate::tracking::Track;
use crate::vod::{Detection, GeoDetection};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Errors reading or writing tool files.
#[derive(Debug)]
pub enum IoError {
    /// The file could not be opened, read, or written.
    Io { path: PathBuf, source: std::io::Error },
    /// The file was read but its content is malformed (line is 1-based;
    /// 0 means the failure is not tied to one line).
    Format { path: PathBuf, line: usize, message: String },
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            IoError::Format { path, line: 0, message } => {
                write!(f, "{}: {message}", path.display())
            }
            IoError::Format { path, line, message } => {
                write!(f, "{}:{line}: {message}", path.display())
            }
        }
    }
}

impl std::error::Error for IoError {}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IoError::Format { path: path.to_path_buf(), line, message: message.into() }
    }

    /// True when the failure is transport-level rather than content-level.
    pub fn is_transport(&self) -> bool {
        matches!(self, IoError::Io { .. })
    }
}

/// One line of a telemetry file: the camera pose for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TelemetryRecord {
    pub frame_id: u64,
    pub ts_us: i64,
    pub lat: f64,
    pub lon: f64,
    pub alt_m: f64,
    pub gimbal_pitch_deg: f64,
    pub heading_deg: f64,
    pub focal_px: f64,
    pub img_w: u32,
    pub img_h: u32,
}

impl TelemetryRecord {
    pub fn camera(&self) -> Result<CameraState, crate::camera::ProjectionError> {
        CameraState::new(
            GeoPoint::new(self.lat, self.lon),
            self.alt_m,
            self.gimbal_pitch_deg,
            self.heading_deg,
            self.focal_px,
            self.img_w,
            self.img_h,
        )
    }

    pub fn from_camera(frame_id: u64, ts_us: i64, cam: &CameraState) -> Self {
        TelemetryRecord {
            frame_id,
            ts_us,
            lat: cam.position().lat_deg,
            lon: cam.position().lon_deg,
            alt_m: cam.alt_m(),
            gimbal_pitch_deg: cam.gimbal_pitch_deg(),
            heading_deg: cam.heading_deg(),
            focal_px: cam.focal_px(),
            img_w: cam.img_w(),
            img_h: cam.img_h(),
        }
    }
}

/// One line of a detections file: every detector box for one frame, each as
/// `[x1, y1, x2, y2, class_id, confidence]`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DetectionRecord {
    pub frame_id: u64,
    pub dets: Vec<(f64, f64, f64, f64, u32, f64)>,
}

impl DetectionRecord {
    pub fn from_detections(frame_id: u64, dets: &[Detection]) -> Self {
        DetectionRecord {
            frame_id,
            dets: dets
                .iter()
                .map(|d| (d.x1, d.y1, d.x2, d.y2, d.class_id, d.confidence))
                .collect(),
        }
    }

    pub fn detections(&self) -> Result<Vec<Detection>, String> {
        self.dets
            .iter()
            .map(|&(x1, y1, x2, y2, class_id, conf)| {
                Detection::new(x1, y1, x2, y2, class_id, conf).map_err(|e| e.to_string())
            })
            .collect()
    }
}

/// One simulator ground-truth object instance in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct GtObject {
    pub object: usize,
    pub class_id: u32,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub lat: f64,
    pub lon: f64,
    pub in_view: bool,
}

/// One line of a simulator ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct GtRecord {
    pub frame_id: u64,
    pub objects: Vec<GtObject>,
}

/// One line of a heatmap index file; `file` is relative to the index.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct HeatmapIndexEntry {
    pub frame_id: u64,
    pub file: String,
    pub w: u32,
    pub h: u32,
}

/// Reads a whole JSONL file, reporting the first malformed line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line)
            .map_err(|e| IoError::format(path, i + 1, e.to_string()))?;
        out.push(value);
    }
    Ok(out)
}

/// Writes records as JSONL, one compact document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| IoError::format(path, 0, format!("cannot serialize record: {e}")))?;
        writeln!(w, "{line}").map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Joins a telemetry file and a detections file into frame-ordered stream
/// input. Every detection frame must have telemetry; telemetry-only frames
/// become frames with no detections.
pub fn read_stream(telemetry: &Path, detections: &Path) -> Result<Vec<StreamFrame>, IoError> {
    let telem: Vec<TelemetryRecord> = read_jsonl(telemetry)?;
    let dets: Vec<DetectionRecord> = read_jsonl(detections)?;

    let mut by_frame: std::collections::BTreeMap<u64, (TelemetryRecord, Vec<Detection>)> =
        std::collections::BTreeMap::new();
    for t in &telem {
        if by_frame.insert(t.frame_id, (*t, Vec::new())).is_some() {
            return Err(IoError::format(
                telemetry,
                0,
                format!("duplicate telemetry for frame {}", t.frame_id),
            ));
        }
    }
    for d in &dets {
        let Some(slot) = by_frame.get_mut(&d.frame_id) else {
            return Err(IoError::format(
                detections,
                0,
                format!("frame {} has detections but no telemetry", d.frame_id),
            ));
        };
        if !slot.1.is_empty() {
            return Err(IoError::format(
                detections,
                0,
                format!("duplicate detection record for frame {}", d.frame_id),
            ));
        }
        slot.1 = d
            .detections()
            .map_err(|msg| IoError::format(detections, 0, format!("frame {}: {msg}", d.frame_id)))?;
    }

    by_frame
        .into_iter()
        .map(|(frame_id, (t, detections))| {
            let cam = t.camera().map_err(|e| {
                IoError::format(telemetry, 0, format!("frame {frame_id}: bad camera: {e}"))
            })?;
            Ok(StreamFrame { frame_id, ts_us: t.ts_us, cam, detections })
        })
        .collect()
}

/// One row of track output: a confirmed box with its track identity and,
/// when the box was geolocatable, its ground position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub frame_id: u64,
    pub track_id: u64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub conf: f64,
    pub class_id: u32,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

const TRACK_CSV_HEADER: &str = "frame_id,track_id,x1,y1,x2,y2,conf,class_id,lat,lon";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

/// Writes track rows as headed CSV.
pub fn write_track_csv(path: &Path, rows: &[TrackRow]) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{TRACK_CSV_HEADER}").map_err(|e| IoError::io(path, e))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame_id,
            r.track_id,
            r.x1,
            r.y1,
            r.x2,
            r.y2,
            r.conf,
            r.class_id,
            fmt_opt(r.lat),
            fmt_opt(r.lon)
        )
        .map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Reads track rows back from headed CSV.
pub fn read_track_csv(path: &Path) -> Result<Vec<TrackRow>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACK_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(IoError::format(path, 1, format!("unexpected header {header:?}")))
        }
        None => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(IoError::format(path, i + 1, format!("expected 10 fields, got {}", fields.len())));
        }
        let num = |j: usize| -> Result<f64, IoError> {
            fields[j]
                .trim()
                .parse::<f64>()
                .map_err(|e| IoError::format(path, i + 1, format!("field {}: {e}", j + 1)))
        };
        let opt = |j: usize| -> Result<Option<f64>, IoError> {
            let s = fields[j].trim();
            if s.is_empty() { Ok(None) } else { num(j).map(Some) }
        };
        rows.push(TrackRow {
            frame_id: fields[0]
                .trim()
                .parse()
                .map_err(|e| IoError::format(path, i + 1, format!("frame_id: {e}")))?,
            track_id: fields[1]
                .trim()
                .parse()
                .map_err(|e| IoError::format(path, i + 1, format!("track_id: {e}")))?,
            x1: num(2)?,
            y1: num(3)?,
            x2: num(4)?,
            y2: num(5)?,
            conf: num(6)?,
            class_id: fields[7]
                .trim()
                .parse()
                .map_err(|e| IoError::format(path, i + 1, format!("class_id: {e}")))?,
            lat: opt(8)?,
            lon: opt(9)?,
        });
    }
    Ok(rows)
}

const SIZE_CSV_HEADER: &str = "class_id,distance_m,diameter_px";

/// Writes size-model training samples as headed CSV.
pub fn write_size_csv(path: &Path, points: &[SizePoint]) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SIZE_CSV_HEADER}").map_err(|e| IoError::io(path, e))?;
    for p in points {
        writeln!(w, "{},{},{}", p.class_id, p.distance_m, p.diameter_px)
            .map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Reads size-model training samples from headed CSV.
pub fn read_size_csv(path: &Path) -> Result<Vec<SizePoint>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SIZE_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(IoError::format(path, 1, format!("unexpected header {header:?}")))
        }
        None => return Ok(Vec::new()),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(IoError::format(path, i + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        let class_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|e| IoError::format(path, i + 1, format!("class_id: {e}")))?;
        let distance_m: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|e| IoError::format(path, i + 1, format!("distance_m: {e}")))?;
        let diameter_px: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| IoError::format(path, i + 1, format!("diameter_px: {e}")))?;
        points.push(SizePoint { class_id, distance_m, diameter_px });
    }
    Ok(points)
}

/// Writes one frame's heatmap as raw little-endian `f32` and returns the
/// index entry pointing at it. The file lands next to the index.
pub fn write_heatmap(dir: &Path, frame_id: u64, hm: &FrameHeatmap) -> Result<HeatmapIndexEntry, IoError> {
    let name = format!("heatmap_{frame_id:06}.f32");
    let path = dir.join(&name);
    let mut bytes = Vec::with_capacity(hm.values().len() * 4);
    for v in hm.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&path, bytes).map_err(|e| IoError::io(&path, e))?;
    Ok(HeatmapIndexEntry { frame_id, file: name, w: hm.width() as u32, h: hm.height() as u32 })
}

/// Loads the heatmap an index entry points at; `index_dir` is the directory
/// holding the index file.
pub fn read_heatmap(index_dir: &Path, entry: &HeatmapIndexEntry) -> Result<FrameHeatmap, IoError> {
    let path = index_dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| IoError::io(&path, e))?;
    let expected = entry.w as usize * entry.h as usize * 4;
    if bytes.len() != expected {
        return Err(IoError::format(
            &path,
            0,
            format!("expected {expected} bytes for {}x{}, got {}", entry.w, entry.h, bytes.len()),
        ));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FrameHeatmap::new(entry.w as usize, entry.h as usize, values)
        .map_err(|e| IoError::format(&path, 0, e.to_string()))
}

/// Writes a memory map in its native byte format.
pub fn write_map(path: &Path, map: &MemoryMap) -> Result<(), IoError> {
    fs::write(path, map.to_bytes()).map_err(|e| IoError::io(path, e))
}

/// Reads a memory map from its native byte format.
pub fn read_map(path: &Path) -> Result<MemoryMap, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    MemoryMap::from_bytes(&bytes).map_err(|e| IoError::format(path, 0, e.to_string()))
}

fn feature(geometry: serde_json::Value, properties: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "type": "Feature", "geometry": geometry, "properties": properties })
}

fn collection(features: Vec<serde_json::Value>) -> serde_json::Value {
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}

/// GeoJSON Point features for geolocated detections (coordinates are
/// `[longitude, latitude]` per the format).
pub fn geojson_detections(dets: &[(u64, GeoDetection)]) -> serde_json::Value {
    let features = dets
        .iter()
        .filter_map(|(frame_id, gd)| {
            gd.position().map(|p| {
                feature(
                    serde_json::json!({ "type": "Point", "coordinates": [p.lon_deg, p.lat_deg] }),
                    serde_json::json!({
                        "frame_id": frame_id,
                        "class_id": gd.detection.class_id,
                        "confidence": gd.detection.confidence,
                        "boosted_confidence": gd.boosted_confidence,
                    }),
                )
            })
        })
        .collect();
    collection(features)
}

/// GeoJSON LineString features, one per track history.
pub fn geojson_tracks(tracks: &[Track]) -> serde_json::Value {
    let features = tracks
        .iter()
        .filter(|t| !t.history.is_empty())
        .map(|t| {
            let coords: Vec<[f64; 2]> =
                t.history.iter().map(|(_, p)| [p.lon_deg, p.lat_deg]).collect();
            feature(
                serde_json::json!({ "type": "LineString", "coordinates": coords }),
                serde_json::json!({
                    "track_id": t.track_id,
                    "class_id": t.class_id,
                    "points": t.history.len(),
                }),
            )
        })
        .collect();
    collection(features)
}

/// GeoJSON Polygon features for extracted anomaly regions; the ring is
/// closed (first coordinate repeated last) as the format requires.
pub fn geojson_regions(regions: &[AnomalyRegion]) -> serde_json::Value {
    let features = regions
        .iter()
        .map(|r| {
            let mut ring: Vec<[f64; 2]> =
                r.polygon.iter().map(|p| [p.lon_deg, p.lat_deg]).collect();
            if let Some(&first) = ring.first() {
                ring.push(first);
            }
            feature(
                serde_json::json!({ "type": "Polygon", "coordinates": [ring] }),
                serde_json::json!({ "peak_score": r.peak_score, "area_m2": r.area_m2 }),
            )
        })
        .collect();
    collection(features)
}
