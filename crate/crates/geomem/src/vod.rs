//! Per-frame video-object-detection flow.
//!
//! Every frame runs the same fixed sequence over the pre-NMS detector
//! output: geolocate box centers, drop implausibly sized boxes, recenter the
//! per-class memory maps to the camera, boost confidences from last frame's
//! map state, splat the original confidences back into the maps, close the
//! map frame (clamp + decay), and only then run per-class NMS and the final
//! confidence threshold. Boosting before NMS is the point: persistent
//! low-confidence detections accumulate map support until they clear the
//! threshold, while one-off false positives never build any.
//!
//! Detections whose box center cannot be geolocated (above the horizon or
//! behind the camera) bypass the size filter and the maps entirely but still
//! compete in NMS with their unmodified confidence — dropping them silently
//! would delete sky-adjacent boxes.

use crate::camera::CameraState;
use crate::geodesy::{self, GeoError, GeoPoint};
use crate::map::{MapError, MapSpec, MemoryMap};
use crate::size_filter::SizeModel;
use std::collections::BTreeMap;
use std::fmt;

/// Errors from per-frame pipeline processing.
#[derive(Debug)]
pub enum PipelineError {
    /// Frames must be fed in strictly increasing frame_id order.
    OutOfOrderFrame { got: u64, last: u64 },
    /// A detection frame has no matching telemetry record.
    MissingMetadata { frame_id: u64 },
    /// A detection violates its invariants; the message names the field.
    InvalidDetection(String),
    Geodesy(GeoError),
    Map(MapError),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::OutOfOrderFrame { got, last } => {
                write!(f, "frame {got} arrived after frame {last}; frames must strictly increase")
            }
            PipelineError::MissingMetadata { frame_id } => {
                write!(f, "no telemetry record for frame {frame_id}")
            }
            PipelineError::InvalidDetection(msg) => write!(f, "invalid detection: {msg}"),
            PipelineError::Geodesy(e) => write!(f, "geodesy failure: {e}"),
            PipelineError::Map(e) => write!(f, "map failure: {e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<GeoError> for PipelineError {
    fn from(e: GeoError) -> Self {
        PipelineError::Geodesy(e)
    }
}

impl From<MapError> for PipelineError {
    fn from(e: MapError) -> Self {
        PipelineError::Map(e)
    }
}

/// One pre-NMS detector box in image coordinates (top-left origin).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Detection {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub class_id: u32,
    pub confidence: f64,
}

impl Detection {
    /// Validates box geometry (positive width and height) and confidence.
    pub fn new(
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        class_id: u32,
        confidence: f64,
    ) -> Result<Self, PipelineError> {
        let bad = |msg: String| Err(PipelineError::InvalidDetection(msg));
        for (name, v) in [("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)] {
            if !v.is_finite() {
                return bad(format!("{name} = {v} is not finite"));
            }
        }
        if x1 >= x2 || y1 >= y2 {
            return bad(format!("degenerate box [{x1}, {y1}, {x2}, {y2}]"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return bad(format!("confidence {confidence} out of [0, 1]"));
        }
        Ok(Detection { x1, y1, x2, y2, class_id, confidence })
    }

    /// Box center in image coordinates.
    pub fn center_px(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Box diameter: the diagonal length, which is rotation-robust for the
    /// near-square boxes this pipeline sees.
    pub fn diameter_px(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    /// Intersection-over-union with another box.
    pub fn iou(&self, other: &Detection) -> f64 {
        let ix = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let iy = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = ix * iy;
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }
}

/// Where a detection's box center landed in the world.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "status")]
pub enum GeoStatus {
    /// Ground intersection found; position and slant distance are valid.
    Located { position: GeoPoint, slant_distance_m: f64 },
    /// Box center is at or above the horizon; no ground intersection.
    AboveHorizon,
    /// Box center's ray points away from the ground.
    BehindCamera,
}

/// A detection with its geolocation outcome and boosted confidence.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeoDetection {
    pub detection: Detection,
    pub status: GeoStatus,
    /// Confidence after memory-map boosting (equals the original confidence
    /// until the boost step runs, and always for non-locatable detections).
    pub boosted_confidence: f64,
}

impl GeoDetection {
    pub fn is_located(&self) -> bool {
        matches!(self.status, GeoStatus::Located { .. })
    }

    pub fn position(&self) -> Option<GeoPoint> {
        match self.status {
            GeoStatus::Located { position, .. } => Some(position),
            _ => None,
        }
    }

    pub fn slant_distance_m(&self) -> Option<f64> {
        match self.status {
            GeoStatus::Located { slant_distance_m, .. } => Some(slant_distance_m),
            _ => None,
        }
    }
}

/// Per-frame bookkeeping counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FrameCounts {
    /// Detections discarded by the size filter.
    pub size_filtered: usize,
    /// Detections that crossed the confidence threshold only because of
    /// boosting (original confidence below, boosted at or above).
    pub boosted_above_threshold: usize,
    /// Detections suppressed by NMS.
    pub suppressed: usize,
}

/// Output of one pipeline frame.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameResult {
    pub frame_id: u64,
    /// All detections that survived the size filter, with boosted
    /// confidences, in input order (pre-NMS).
    pub boosted: Vec<GeoDetection>,
    /// Post-NMS, post-threshold output.
    pub final_detections: Vec<GeoDetection>,
    pub counts: FrameCounts,
}

/// Pipeline parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VodConfig {
    pub map: MapSpec,
    /// IoU above which NMS suppresses the lower-confidence box.
    pub iou_threshold: f64,
    /// Final confidence threshold on boosted confidences.
    pub confidence_threshold: f64,
    /// When false, boosting is skipped (baseline mode); maps still update.
    pub boost_enabled: bool,
}

impl Default for VodConfig {
    fn default() -> Self {
        VodConfig {
            map: MapSpec::default(),
            iou_threshold: 0.5,
            confidence_threshold: 0.5,
            boost_enabled: true,
        }
    }
}

/// Geolocates one detection's box center. Only a camera parked essentially
/// on a pole can fail; above-horizon and behind-camera outcomes are statuses.
pub fn geolocate_detection(cam: &CameraState, det: &Detection) -> Result<GeoStatus, GeoError> {
    let (cx, cy) = det.center_px();
    let pixel = cam.pixel_from_image_coords(cx, cy);
    match geodesy::pixel_to_gps(cam, pixel) {
        Ok(loc) => Ok(GeoStatus::Located {
            position: loc.position,
            slant_distance_m: loc.slant_m,
        }),
        Err(GeoError::Projection(crate::camera::ProjectionError::AboveHorizon)) => {
            Ok(GeoStatus::AboveHorizon)
        }
        Err(GeoError::Projection(crate::camera::ProjectionError::BehindCamera)) => {
            Ok(GeoStatus::BehindCamera)
        }
        Err(e) => Err(e),
    }
}

/// Geolocates every detection, preserving order. Boosted confidences start
/// equal to the originals.
pub fn geolocate_detections(
    cam: &CameraState,
    detections: &[Detection],
) -> Result<Vec<GeoDetection>, GeoError> {
    detections
        .iter()
        .map(|det| {
            Ok(GeoDetection {
                detection: *det,
                status: geolocate_detection(cam, det)?,
                boosted_confidence: det.confidence,
            })
        })
        .collect()
}

/// Greedy NMS: scan boxes in descending score order (ties broken by lower
/// index) and suppress any not-yet-kept box overlapping a kept one with
/// IoU > threshold. Returns kept indices in ascending input order.
pub fn nms_keep_indices(boxes: &[Detection], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    debug_assert_eq!(boxes.len(), scores.len());
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut suppressed = vec![false; boxes.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(i);
        // Only boxes ranked below the kept one can still change state: every
        // earlier entry is already kept (and thus under the overlap
        // threshold) or already suppressed.
        for &j in &order[pos + 1..] {
            if !suppressed[j] && boxes[i].iou(&boxes[j]) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept.sort_unstable();
    kept
}

/// State handed from [`VodPipeline::prepare_frame`] to
/// [`VodPipeline::finish_frame`]. Between the two, boost values may be
/// computed from this pipeline's own maps or (in cooperative mode) from
/// several pipelines' maps at once.
#[derive(Debug)]
pub struct PreparedFrame {
    frame_id: u64,
    /// Size-filter survivors plus non-locatable detections, in input order.
    dets: Vec<GeoDetection>,
    size_filtered: usize,
}

impl PreparedFrame {
    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }

    pub fn detections(&self) -> &[GeoDetection] {
        &self.dets
    }
}

/// One video stream's detection pipeline: per-class memory maps plus the
/// fixed per-frame flow. Strictly sequential over frames; distinct streams
/// use distinct pipelines.
#[derive(Debug, Clone)]
pub struct VodPipeline {
    config: VodConfig,
    size_model: Option<SizeModel>,
    maps: BTreeMap<u32, MemoryMap>,
    last_frame: Option<u64>,
}

impl VodPipeline {
    pub fn new(config: VodConfig) -> Result<Self, PipelineError> {
        config.map.grid_cells()?; // surface bad specs at construction
        if !(0.0..=1.0).contains(&config.iou_threshold) {
            return Err(PipelineError::InvalidDetection(format!(
                "iou_threshold {} out of [0, 1]",
                config.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&config.confidence_threshold) {
            return Err(PipelineError::InvalidDetection(format!(
                "confidence_threshold {} out of [0, 1]",
                config.confidence_threshold
            )));
        }
        Ok(VodPipeline {
            config,
            size_model: None,
            maps: BTreeMap::new(),
            last_frame: None,
        })
    }

    /// Installs a size model; detections failing its band check are dropped
    /// before any map interaction.
    pub fn with_size_model(mut self, model: SizeModel) -> Self {
        self.size_model = Some(model);
        self
    }

    pub fn config(&self) -> &VodConfig {
        &self.config
    }

    /// Per-class memory maps (classes appear lazily on first located
    /// detection).
    pub fn maps(&self) -> &BTreeMap<u32, MemoryMap> {
        &self.maps
    }

    pub fn map(&self, class_id: u32) -> Option<&MemoryMap> {
        self.maps.get(&class_id)
    }

    /// Steps 1–3 of the frame flow: geolocate, size-filter, and recenter all
    /// maps to the camera (creating maps for newly seen classes). The boost
    /// step is split out so cooperative fusion can source boost values from
    /// several streams' maps.
    pub fn prepare_frame(
        &mut self,
        frame_id: u64,
        cam: &CameraState,
        detections: &[Detection],
    ) -> Result<PreparedFrame, PipelineError> {
        if let Some(last) = self.last_frame {
            if frame_id <= last {
                return Err(PipelineError::OutOfOrderFrame { got: frame_id, last });
            }
        }
        self.last_frame = Some(frame_id);

        let located = geolocate_detections(cam, detections)?;
        let mut dets = Vec::with_capacity(located.len());
        let mut size_filtered = 0;
        for gd in located {
            match gd.status {
                GeoStatus::Located { position: _, slant_distance_m } => {
                    let keep = match &self.size_model {
                        Some(model) => model.accepts(
                            gd.detection.class_id,
                            slant_distance_m,
                            gd.detection.diameter_px(),
                        ),
                        None => true,
                    };
                    if keep {
                        dets.push(gd);
                    } else {
                        size_filtered += 1;
                    }
                }
                // Non-locatable detections bypass the filter and the maps.
                _ => dets.push(gd),
            }
        }

        for gd in &dets {
            if gd.is_located() && !self.maps.contains_key(&gd.detection.class_id) {
                self.maps.insert(
                    gd.detection.class_id,
                    MemoryMap::new(self.config.map.clone(), cam.position(), gd.detection.class_id)?,
                );
            }
        }
        for map in self.maps.values_mut() {
            map.begin_frame();
            map.recenter(cam.position())?;
        }

        Ok(PreparedFrame { frame_id, dets, size_filtered })
    }

    /// Boost values from this pipeline's own maps: last frame's likelihood at
    /// each located detection's position (0 for non-locatable detections, or
    /// when boosting is disabled).
    pub fn compute_boosts(&self, prepared: &PreparedFrame) -> Vec<f64> {
        prepared
            .dets
            .iter()
            .map(|gd| match gd.status {
                GeoStatus::Located { position, .. } if self.config.boost_enabled => self
                    .maps
                    .get(&gd.detection.class_id)
                    .map_or(0.0, |m| f64::from(m.query(position))),
                _ => 0.0,
            })
            .collect()
    }

    /// Steps 4–8: apply boosts, splat original confidences, close the map
    /// frame, then per-class NMS and the final threshold. `boosts` must be
    /// aligned with `prepared.detections()`.
    pub fn finish_frame(
        &mut self,
        prepared: PreparedFrame,
        boosts: &[f64],
    ) -> Result<FrameResult, PipelineError> {
        let PreparedFrame { frame_id, mut dets, size_filtered } = prepared;
        assert_eq!(dets.len(), boosts.len(), "boosts misaligned with prepared frame");

        let mut boosted_above_threshold = 0;
        for (gd, &p) in dets.iter_mut().zip(boosts) {
            debug_assert!(p >= 0.0, "boost {p} must be non-negative");
            gd.boosted_confidence = (gd.detection.confidence + p).min(1.0);
            if gd.detection.confidence < self.config.confidence_threshold
                && gd.boosted_confidence >= self.config.confidence_threshold
            {
                boosted_above_threshold += 1;
            }
        }

        // Maps always receive the ORIGINAL confidences: boosting feeds on the
        // map, never back into it.
        for gd in &dets {
            if let GeoStatus::Located { position, .. } = gd.status {
                if let Some(map) = self.maps.get_mut(&gd.detection.class_id) {
                    map.splat(position, gd.detection.confidence);
                }
            }
        }
        for map in self.maps.values_mut() {
            map.end_frame()?;
        }

        // Per-class greedy NMS on boosted confidences.
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, gd) in dets.iter().enumerate() {
            by_class.entry(gd.detection.class_id).or_default().push(i);
        }
        let mut keep = vec![false; dets.len()];
        for indices in by_class.values() {
            let boxes: Vec<Detection> = indices.iter().map(|&i| dets[i].detection).collect();
            let scores: Vec<f64> = indices.iter().map(|&i| dets[i].boosted_confidence).collect();
            for k in nms_keep_indices(&boxes, &scores, self.config.iou_threshold) {
                keep[indices[k]] = true;
            }
        }
        let suppressed = keep.iter().filter(|&&k| !k).count();

        let final_detections: Vec<GeoDetection> = dets
            .iter()
            .enumerate()
            .filter(|&(i, gd)| keep[i] && gd.boosted_confidence >= self.config.confidence_threshold)
            .map(|(_, gd)| *gd)
            .collect();

        Ok(FrameResult {
            frame_id,
            boosted: dets,
            final_detections,
            counts: FrameCounts { size_filtered, boosted_above_threshold, suppressed },
        })
    }

    /// The full single-stream frame flow.
    pub fn process_frame(
        &mut self,
        frame_id: u64,
        cam: &CameraState,
        detections: &[Detection],
    ) -> Result<FrameResult, PipelineError> {
        let prepared = self.prepare_frame(frame_id, cam, detections)?;
        let boosts = self.compute_boosts(&prepared);
        self.finish_frame(prepared, &boosts)
    }
}
