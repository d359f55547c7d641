//! Multi-UAV map fusion and cooperative detection.
//!
//! Several UAVs observing overlapping ground build independent per-class
//! memory maps. Fusion combines them two ways:
//!
//! * [`merge`] materializes a joint map on a requested grid — each output
//!   cell is the arithmetic mean of the input maps that cover it (cells seen
//!   by one map copy that map's value; unseen cells stay 0).
//! * [`merged_query`] evaluates the same coverage-aware mean at a single
//!   position without building the grid. The cooperative pipeline boosts
//!   detections through this functional form, which keeps a one-stream
//!   cooperative run bit-identical to the plain single-stream pipeline (a
//!   materialized merge would resample onto a new lattice and perturb values
//!   at cell boundaries).
//!
//! Streams are paired frame-by-frame by nearest timestamp against stream 0's
//! clock; boosting reads all streams' *pre-splat* maps so every stream sees
//! the same fused past, and splats still land only in their own stream's map.
//! Tracking runs on one shared tracker, so track ids transfer across UAVs.

use crate::camera::CameraState;
use crate::geodesy::GeoPoint;
use crate::map::{MapError, MapSpec, MemoryMap};
use crate::size_filter::SizeModel;
use crate::tracking::{Assignment, Tracker, TrackerConfig};
use crate::vod::{Detection, FrameResult, GeoStatus, PipelineError, VodConfig, VodPipeline};
use std::fmt;

/// Errors from fusion orchestration.
#[derive(Debug)]
pub enum FusionError {
    /// A stream's clock could not be paired to stream 0 within tolerance.
    ClockSkew { stream: usize, target_ts_us: i64, nearest_ts_us: Option<i64> },
    /// Stream counts or frame groups are malformed; the message says how.
    InvalidStreams(String),
    Pipeline(PipelineError),
    Map(MapError),
}

impl fmt::Display for FusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionError::ClockSkew { stream, target_ts_us, nearest_ts_us } => match nearest_ts_us
            {
                Some(ts) => write!(
                    f,
                    "stream {stream}: nearest frame at {ts} µs is out of tolerance of {target_ts_us} µs"
                ),
                None => write!(
                    f,
                    "stream {stream}: no frames left to pair with {target_ts_us} µs"
                ),
            },
            FusionError::InvalidStreams(msg) => write!(f, "invalid streams: {msg}"),
            FusionError::Pipeline(e) => write!(f, "pipeline failure: {e}"),
            FusionError::Map(e) => write!(f, "map failure: {e}"),
        }
    }
}

impl std::error::Error for FusionError {}

impl From<PipelineError> for FusionError {
    fn from(e: PipelineError) -> Self {
        FusionError::Pipeline(e)
    }
}

impl From<MapError> for FusionError {
    fn from(e: MapError) -> Self {
        FusionError::Map(e)
    }
}

/// How overlapping cells combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Arithmetic mean over covering maps — the default and the tested path.
    #[default]
    Mean,
    /// Maximum over covering maps; experimental alternative.
    Max,
}

/// Coverage-aware combination of several maps' values at one position:
/// maps whose window does not contain the position do not participate, so a
/// lone observer is never diluted. Returns 0 when nothing covers it.
pub fn merged_query(maps: &[&MemoryMap], position: GeoPoint, mode: OverlapMode) -> f32 {
    let mut sum = 0.0f64;
    let mut covering = 0u32;
    let mut max = 0.0f32;
    for map in maps {
        if let Some((r, c)) = map.cell_index(position) {
            let v = map.cell(r, c);
            sum += f64::from(v);
            covering += 1;
            max = max.max(v);
        }
    }
    if covering == 0 {
        return 0.0;
    }
    match mode {
        OverlapMode::Mean => (sum / f64::from(covering)) as f32,
        OverlapMode::Max => max,
    }
}

/// Materializes the joint map on a grid centered at `target_center`. All
/// input maps must share class id and cell size (the grids may be offset —
/// values are gathered through each map's own nearest-cell lookup). Inputs
/// are snapshots: merging never mutates a live map.
pub fn merge(
    maps: &[&MemoryMap],
    target_center: GeoPoint,
    spec: &MapSpec,
    mode: OverlapMode,
) -> Result<MemoryMap, MapError> {
    let Some(first) = maps.first() else {
        return Err(MapError::InvalidSpec("merge requires at least one map".into()));
    };
    let class_id = first.class_id();
    for map in maps {
        if map.class_id() != class_id {
            return Err(MapError::SpecMismatch(format!(
                "cannot merge class {} with class {}",
                class_id,
                map.class_id()
            )));
        }
        if map.spec().cell_size_m != spec.cell_size_m {
            return Err(MapError::SpecMismatch(format!(
                "cell size {} m differs from target {} m",
                map.spec().cell_size_m,
                spec.cell_size_m
            )));
        }
    }
    let mut out = MemoryMap::new(spec.clone(), target_center, class_id)?;
    let n = out.n();
    for r in 0..n {
        for c in 0..n {
            let v = merged_query(maps, out.cell_position(r, c), mode);
            if v != 0.0 {
                out.deposit(r, c, v);
            }
        }
    }
    Ok(out)
}

/// One stream's frame of input for cooperative processing.
#[derive(Debug, Clone)]
pub struct StreamFrame {
    pub frame_id: u64,
    pub ts_us: i64,
    pub cam: CameraState,
    pub detections: Vec<Detection>,
}

/// Cooperative pipeline parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub vod: VodConfig,
    pub tracker: TrackerConfig,
    /// Maximum timestamp gap when pairing other streams to stream 0.
    pub pairing_tolerance_us: i64,
    pub overlap: OverlapMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            vod: VodConfig::default(),
            tracker: TrackerConfig::default(),
            pairing_tolerance_us: 50_000,
            overlap: OverlapMode::Mean,
        }
    }
}

/// Pairs each stream's frames to stream 0's timeline by nearest timestamp.
/// Returns, per stream, the chosen frame index for each stream-0 frame.
/// Chosen indices are strictly increasing per stream (a frame is consumed
/// once); a gap larger than the tolerance is a [`FusionError::ClockSkew`].
pub fn pair_streams(
    timestamps: &[Vec<i64>],
    tolerance_us: i64,
) -> Result<Vec<Vec<usize>>, FusionError> {
    let Some(reference) = timestamps.first() else {
        return Err(FusionError::InvalidStreams("no streams to pair".into()));
    };
    let mut pairing = vec![Vec::with_capacity(reference.len()); timestamps.len()];
    pairing[0] = (0..reference.len()).collect();
    for (s, stream_ts) in timestamps.iter().enumerate().skip(1) {
        let mut cursor = 0usize;
        for &target in reference {
            if cursor >= stream_ts.len() {
                return Err(FusionError::ClockSkew {
                    stream: s,
                    target_ts_us: target,
                    nearest_ts_us: None,
                });
            }
            while cursor + 1 < stream_ts.len()
                && (stream_ts[cursor + 1] - target).abs() < (stream_ts[cursor] - target).abs()
            {
                cursor += 1;
            }
            if (stream_ts[cursor] - target).abs() > tolerance_us {
                return Err(FusionError::ClockSkew {
                    stream: s,
                    target_ts_us: target,
                    nearest_ts_us: Some(stream_ts[cursor]),
                });
            }
            pairing[s].push(cursor);
            cursor += 1; // consume: indices strictly increase
        }
    }
    Ok(pairing)
}

/// Per-stream output of one cooperative frame group.
#[derive(Debug, Clone)]
pub struct StreamStep {
    pub stream: usize,
    pub result: FrameResult,
    /// (detection index into `result.final_detections`, track id).
    pub track_assignments: Vec<(usize, u64)>,
}

/// Runs several single-stream pipelines against a shared fused past and a
/// shared tracker. Streams are processed in index order within each group.
#[derive(Debug)]
pub struct CooperativeRunner {
    config: FusionConfig,
    pipelines: Vec<VodPipeline>,
    tracker: Tracker,
}

impl CooperativeRunner {
    pub fn new(config: FusionConfig, stream_count: usize) -> Result<Self, FusionError> {
        if stream_count == 0 {
            return Err(FusionError::InvalidStreams("need at least one stream".into()));
        }
        let mut pipelines = Vec::with_capacity(stream_count);
        for _ in 0..stream_count {
            pipelines.push(VodPipeline::new(config.vod.clone())?);
        }
        let tracker = Tracker::new(config.tracker.clone());
        Ok(CooperativeRunner { config, pipelines, tracker })
    }

    /// Installs a size model on one stream's pipeline.
    pub fn set_size_model(&mut self, stream: usize, model: SizeModel) {
        let pipeline = std::mem::replace(
            &mut self.pipelines[stream],
            VodPipeline::new(self.config.vod.clone()).expect("config validated at construction"),
        );
        self.pipelines[stream] = pipeline.with_size_model(model);
    }

    pub fn pipelines(&self) -> &[VodPipeline] {
        &self.pipelines
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Processes one paired frame group (one frame per stream, stream order).
    ///
    /// All streams' frames are prepared first (geolocate, size-filter,
    /// recenter), so every map holds last frame's decayed state; then each
    /// detection is boosted by the coverage-aware mean over ALL streams'
    /// maps of its class; then each stream finishes its frame (splat into its
    /// own map, close, NMS, threshold); finally the shared tracker consumes
    /// every stream's final detections as one group.
    pub fn step_group(&mut self, frames: &[StreamFrame]) -> Result<Vec<StreamStep>, FusionError> {
        if frames.len() != self.pipelines.len() {
            return Err(FusionError::InvalidStreams(format!(
                "{} frames for {} streams",
                frames.len(),
                self.pipelines.len()
            )));
        }

        let mut prepared = Vec::with_capacity(frames.len());
        for (pipeline, frame) in self.pipelines.iter_mut().zip(frames) {
            prepared.push(pipeline.prepare_frame(frame.frame_id, &frame.cam, &frame.detections)?);
        }

        // Boost from the union of pre-splat maps across all streams.
        let boost_enabled = self.config.vod.boost_enabled;
        let mut all_boosts: Vec<Vec<f64>> = Vec::with_capacity(prepared.len());
        for p in &prepared {
            let boosts = p
                .detections()
                .iter()
                .map(|gd| match gd.status {
                    GeoStatus::Located { position, .. } if boost_enabled => {
                        let class_maps: Vec<&MemoryMap> = self
                            .pipelines
                            .iter()
                            .filter_map(|pl| pl.map(gd.detection.class_id))
                            .collect();
                        f64::from(merged_query(&class_maps, position, self.config.overlap))
                    }
                    _ => 0.0,
                })
                .collect();
            all_boosts.push(boosts);
        }

        let mut results = Vec::with_capacity(prepared.len());
        for ((pipeline, p), boosts) in
            self.pipelines.iter_mut().zip(prepared).zip(&all_boosts)
        {
            results.push(pipeline.finish_frame(p, boosts)?);
        }

        // One shared tracker step for the whole group: ids are global, and a
        // track matched by any stream stays alive for all of them.
        let group_frame = frames[0].frame_id;
        let finals: Vec<(usize, Vec<crate::vod::GeoDetection>)> = results
            .iter()
            .enumerate()
            .map(|(s, r)| (s, r.final_detections.clone()))
            .collect();
        let borrowed: Vec<(usize, &[crate::vod::GeoDetection])> =
            finals.iter().map(|(s, v)| (*s, v.as_slice())).collect();
        let assignments: Vec<Assignment> = self.tracker.step_group(group_frame, &borrowed);

        Ok(results
            .into_iter()
            .enumerate()
            .map(|(stream, result)| StreamStep {
                stream,
                result,
                track_assignments: assignments
                    .iter()
                    .filter(|a| a.stream == stream)
                    .map(|a| (a.det_index, a.track_id))
                    .collect(),
            })
            .collect())
    }
}
