//! Deterministic multi-UAV scenario simulator.
//!
//! A scenario describes camera flight paths, ground objects, and a noisy
//! detector per UAV; running it produces exactly the files the pipeline
//! tools consume — telemetry, detector output, ground truth, and size
//! samples — so end-to-end behaviour can be exercised and scored without
//! real footage.
//!
//! Determinism contract: the random stream is keyed by `(seed, uav, frame)`,
//! and within a frame every object consumes a fixed number of draws whether
//! or not it is visible, missed, or overridden. Changing one object's noise
//! therefore never shifts another object's detections, and re-running a
//! scenario reproduces its output byte for byte.

use crate::camera::{CameraState, ProjectionError};
use crate::geodesy::{self, GeoPoint};
use crate::io::{DetectionRecord, GtObject, GtRecord, TelemetryRecord};
use crate::size_filter::SizePoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fmt;

/// Errors constructing or running a scenario.
#[derive(Debug)]
pub enum SimError {
    /// The scenario description is inconsistent; the message names the field.
    InvalidScenario(String),
    /// A frame's interpolated camera pose is not a valid camera.
    Camera { uav: usize, frame: u64, source: ProjectionError },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidScenario(msg) => write!(f, "invalid scenario: {msg}"),
            SimError::Camera { uav, frame, source } => {
                write!(f, "uav {uav} frame {frame}: invalid camera pose: {source}")
            }
        }
    }
}

impl std::error::Error for SimError {}

/// A camera pose keyframe; poses between keyframes interpolate linearly
/// (heading along the shorter arc).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UavWaypoint {
    pub frame: u64,
    pub lat: f64,
    pub lon: f64,
    pub alt_m: f64,
    pub gimbal_pitch_deg: f64,
    pub heading_deg: f64,
}

/// A ground-object keyframe; positions between keyframes interpolate
/// linearly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectWaypoint {
    pub frame: u64,
    pub lat: f64,
    pub lon: f64,
}

/// Detector noise model. Confidence and diameter draws are uniform over
/// their ranges (a degenerate range pins the value); positional jitter is
/// Gaussian with the given standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    /// Probability a visible object produces no detection this frame.
    pub miss_prob: f64,
    /// Confidence range for the primary detection of an object.
    pub conf_range: (f64, f64),
    /// Gaussian σ of the primary detection's center error, px.
    pub center_jitter_px: f64,
    /// Box side scales by `1 + U(−frac, frac)`.
    pub size_jitter_frac: f64,
    /// Extra duplicate boxes clustered around each detected object.
    pub cluster_count: u32,
    /// Confidence range of cluster boxes.
    pub cluster_conf_range: (f64, f64),
    /// Gaussian σ of cluster-box center error, px.
    pub cluster_jitter_px: f64,
    /// Spurious boxes per frame, uniform over the image.
    pub false_positives_per_frame: u32,
    /// Confidence range of spurious boxes.
    pub fp_conf_range: (f64, f64),
    /// Diagonal-diameter range of spurious boxes, px.
    pub fp_diameter_px_range: (f64, f64),
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            miss_prob: 0.1,
            conf_range: (0.5, 0.9),
            center_jitter_px: 2.0,
            size_jitter_frac: 0.05,
            cluster_count: 0,
            cluster_conf_range: (0.3, 0.5),
            cluster_jitter_px: 8.0,
            false_positives_per_frame: 0,
            fp_conf_range: (0.3, 0.6),
            fp_diameter_px_range: (10.0, 100.0),
        }
    }
}

impl DetectorModel {
    fn validate(&self, what: &str) -> Result<(), SimError> {
        let ranges = [
            ("conf_range", self.conf_range, 0.0, 1.0),
            ("cluster_conf_range", self.cluster_conf_range, 0.0, 1.0),
            ("fp_conf_range", self.fp_conf_range, 0.0, 1.0),
        ];
        for (name, (lo, hi), min, max) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < min || hi > max {
                return Err(SimError::InvalidScenario(format!(
                    "{what}.{name} must be an ordered range within [{min}, {max}], got ({lo}, {hi})"
                )));
            }
        }
        let (dlo, dhi) = self.fp_diameter_px_range;
        if !(dlo.is_finite() && dhi.is_finite()) || dlo <= 0.0 || dlo > dhi {
            return Err(SimError::InvalidScenario(format!(
                "{what}.fp_diameter_px_range must be ordered and positive, got ({dlo}, {dhi})"
            )));
        }
        if !(0.0..=1.0).contains(&self.miss_prob) {
            return Err(SimError::InvalidScenario(format!(
                "{what}.miss_prob must be in [0, 1], got {}",
                self.miss_prob
            )));
        }
        for (name, v) in [
            ("center_jitter_px", self.center_jitter_px),
            ("size_jitter_frac", self.size_jitter_frac),
            ("cluster_jitter_px", self.cluster_jitter_px),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::InvalidScenario(format!(
                    "{what}.{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Replaces the detector model for a frame window `[start_frame,
/// end_frame)`, either for one object (`object: Some(index)`) or for the
/// whole detector including false positives (`object: None`). When several
/// overrides match, the last one listed wins.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorOverride {
    pub start_frame: u64,
    pub end_frame: u64,
    pub object: Option<usize>,
    pub model: DetectorModel,
}

/// One UAV: camera intrinsics, a flight path, and a detector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UavSpec {
    pub focal_px: f64,
    pub img_w: u32,
    pub img_h: u32,
    pub waypoints: Vec<UavWaypoint>,
    #[serde(default)]
    pub detector: DetectorModel,
    #[serde(default)]
    pub overrides: Vec<DetectorOverride>,
}

/// One ground object: a class, a physical diameter, and a path.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectSpec {
    pub class_id: u32,
    pub diameter_m: f64,
    pub waypoints: Vec<ObjectWaypoint>,
}

/// A full scenario; serializable so the command line can run it from JSON.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub frames: u64,
    pub fps: f64,
    pub uavs: Vec<UavSpec>,
    pub objects: Vec<ObjectSpec>,
}

/// Everything one UAV's run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct UavOutput {
    pub telemetry: Vec<TelemetryRecord>,
    pub detections: Vec<DetectionRecord>,
    pub gt: Vec<GtRecord>,
}

/// Everything a scenario run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub uavs: Vec<UavOutput>,
    /// Distance/diameter samples from every emitted primary detection,
    /// suitable for fitting the size model.
    pub sizes: Vec<SizePoint>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn frame_seed(seed: u64, uav: usize, frame: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(uav as u64 + 1)) ^ frame)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Shortest-arc heading interpolation, result normalized to [0, 360).
fn lerp_heading(a: f64, b: f64, t: f64) -> f64 {
    let delta = (b - a + 540.0).rem_euclid(360.0) - 180.0;
    (a + delta * t).rem_euclid(360.0)
}

/// Finds the segment of `waypoints` containing `frame` and the blend factor.
/// Clamps before the first and after the last keyframe.
fn segment<T, F: Fn(&T) -> u64>(waypoints: &[T], frame: u64, key: F) -> (usize, usize, f64) {
    if frame <= key(&waypoints[0]) {
        return (0, 0, 0.0);
    }
    let last = waypoints.len() - 1;
    if frame >= key(&waypoints[last]) {
        return (last, last, 0.0);
    }
    let hi = waypoints.partition_point(|w| key(w) <= frame);
    let lo = hi - 1;
    let f0 = key(&waypoints[lo]) as f64;
    let f1 = key(&waypoints[hi]) as f64;
    (lo, hi, (frame as f64 - f0) / (f1 - f0))
}

fn uav_pose(waypoints: &[UavWaypoint], frame: u64) -> UavWaypoint {
    let (i, j, t) = segment(waypoints, frame, |w| w.frame);
    let (a, b) = (&waypoints[i], &waypoints[j]);
    UavWaypoint {
        frame,
        lat: lerp(a.lat, b.lat, t),
        lon: lerp(a.lon, b.lon, t),
        alt_m: lerp(a.alt_m, b.alt_m, t),
        gimbal_pitch_deg: lerp(a.gimbal_pitch_deg, b.gimbal_pitch_deg, t),
        heading_deg: lerp_heading(a.heading_deg, b.heading_deg, t),
    }
}

fn object_position(waypoints: &[ObjectWaypoint], frame: u64) -> GeoPoint {
    let (i, j, t) = segment(waypoints, frame, |w| w.frame);
    let (a, b) = (&waypoints[i], &waypoints[j]);
    GeoPoint::new(lerp(a.lat, b.lat, t), lerp(a.lon, b.lon, t))
}

fn check_waypoint_frames<T, F: Fn(&T) -> u64>(
    waypoints: &[T],
    what: &str,
    key: F,
) -> Result<(), SimError> {
    if waypoints.is_empty() {
        return Err(SimError::InvalidScenario(format!("{what} has no waypoints")));
    }
    for pair in waypoints.windows(2) {
        if key(&pair[1]) <= key(&pair[0]) {
            return Err(SimError::InvalidScenario(format!(
                "{what} waypoint frames must strictly increase"
            )));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.frames == 0 {
            return Err(SimError::InvalidScenario("frames must be positive".into()));
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(SimError::InvalidScenario(format!("fps must be positive, got {}", self.fps)));
        }
        if self.uavs.is_empty() {
            return Err(SimError::InvalidScenario("scenario needs at least one uav".into()));
        }
        for (i, uav) in self.uavs.iter().enumerate() {
            check_waypoint_frames(&uav.waypoints, &format!("uav {i}"), |w| w.frame)?;
            uav.detector.validate(&format!("uav {i} detector"))?;
            for (j, ov) in uav.overrides.iter().enumerate() {
                if ov.end_frame <= ov.start_frame {
                    return Err(SimError::InvalidScenario(format!(
                        "uav {i} override {j}: window [{}, {}) is empty",
                        ov.start_frame, ov.end_frame
                    )));
                }
                if let Some(obj) = ov.object {
                    if obj >= self.objects.len() {
                        return Err(SimError::InvalidScenario(format!(
                            "uav {i} override {j}: object {obj} does not exist"
                        )));
                    }
                }
                ov.model.validate(&format!("uav {i} override {j}"))?;
            }
        }
        for (i, obj) in self.objects.iter().enumerate() {
            check_waypoint_frames(&obj.waypoints, &format!("object {i}"), |w| w.frame)?;
            if !obj.diameter_m.is_finite() || obj.diameter_m <= 0.0 {
                return Err(SimError::InvalidScenario(format!(
                    "object {i} diameter must be positive, got {}",
                    obj.diameter_m
                )));
            }
        }
        Ok(())
    }

    /// The detector model in force for `object_index` at `frame` on `uav`.
    fn active_model(&self, uav: usize, frame: u64, object_index: Option<usize>) -> DetectorModel {
        let spec = &self.uavs[uav];
        let mut model = spec.detector;
        for ov in &spec.overrides {
            let in_window = frame >= ov.start_frame && frame < ov.end_frame;
            let applies = match (ov.object, object_index) {
                (None, _) => true,                  // whole-detector override
                (Some(o), Some(target)) => o == target,
                (Some(_), None) => false,           // object override never hits FPs
            };
            if in_window && applies {
                model = ov.model;
            }
        }
        model
    }
}

fn conf_draw(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    lerp(range.0, range.1, rng.gen::<f64>())
}

fn normal_draw(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

/// Runs a scenario; outputs are deterministic in the scenario alone.
pub fn run(scenario: &Scenario) -> Result<SimResult, SimError> {
    scenario.validate()?;
    let class_pool: Vec<u32> = {
        let mut classes: Vec<u32> = scenario.objects.iter().map(|o| o.class_id).collect();
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() {
            classes.push(0);
        }
        classes
    };

    let mut uav_outputs = Vec::with_capacity(scenario.uavs.len());
    let mut sizes = Vec::new();

    for (u, uav) in scenario.uavs.iter().enumerate() {
        let mut telemetry = Vec::with_capacity(scenario.frames as usize);
        let mut detections = Vec::with_capacity(scenario.frames as usize);
        let mut gt = Vec::with_capacity(scenario.frames as usize);

        for frame in 0..scenario.frames {
            let pose = uav_pose(&uav.waypoints, frame);
            let cam = CameraState::new(
                GeoPoint::new(pose.lat, pose.lon),
                pose.alt_m,
                pose.gimbal_pitch_deg,
                pose.heading_deg,
                uav.focal_px,
                uav.img_w,
                uav.img_h,
            )
            .map_err(|source| SimError::Camera { uav: u, frame, source })?;
            let ts_us = (frame as f64 * 1_000_000.0 / scenario.fps).round() as i64;
            telemetry.push(TelemetryRecord::from_camera(frame, ts_us, &cam));

            let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(scenario.seed, u, frame));
            let mut frame_dets: Vec<(f64, f64, f64, f64, u32, f64)> = Vec::new();
            let mut frame_gt = Vec::new();

            for (o, obj) in scenario.objects.iter().enumerate() {
                let position = object_position(&obj.waypoints, frame);
                let model = scenario.active_model(u, frame, Some(o));

                // Fixed draw structure: every draw happens whether or not the
                // object is visible or missed, so noise streams never shift.
                let miss_u = rng.gen::<f64>();
                let conf = conf_draw(&mut rng, model.conf_range);
                let jx = normal_draw(&mut rng, model.center_jitter_px);
                let jy = normal_draw(&mut rng, model.center_jitter_px);
                let su = rng.gen_range(-1.0..=1.0) * model.size_jitter_frac;
                let clusters: Vec<(f64, f64, f64, f64)> = (0..model.cluster_count)
                    .map(|_| {
                        (
                            conf_draw(&mut rng, model.cluster_conf_range),
                            normal_draw(&mut rng, model.cluster_jitter_px),
                            normal_draw(&mut rng, model.cluster_jitter_px),
                            rng.gen_range(-1.0..=1.0) * model.size_jitter_frac,
                        )
                    })
                    .collect();

                let Ok(projected) = geodesy::gps_to_pixel(&cam, position) else {
                    continue; // behind camera or above horizon: unobservable
                };
                let (cx, cy) = cam.image_coords_from_pixel(projected.offset);
                let offset = geodesy::gps_to_offset(cam.position(), position)
                    .expect("camera construction rejects pole-adjacent poses");
                let slant_m = cam.alt_m().hypot(offset.norm_m());
                let side_px = uav.focal_px * obj.diameter_m / slant_m;
                frame_gt.push(GtObject {
                    object: o,
                    class_id: obj.class_id,
                    x1: cx - side_px / 2.0,
                    y1: cy - side_px / 2.0,
                    x2: cx + side_px / 2.0,
                    y2: cy + side_px / 2.0,
                    lat: position.lat_deg,
                    lon: position.lon_deg,
                    in_view: projected.in_frame,
                });

                if !projected.in_frame {
                    continue;
                }

                // A miss suppresses the primary detection (and its size
                // sample); redundant cluster boxes belong to the object
                // itself and are emitted whenever it is in frame.
                if miss_u >= model.miss_prob {
                    let det_side = side_px * (1.0 + su);
                    let (dcx, dcy) = (cx + jx, cy + jy);
                    frame_dets.push((
                        dcx - det_side / 2.0,
                        dcy - det_side / 2.0,
                        dcx + det_side / 2.0,
                        dcy + det_side / 2.0,
                        obj.class_id,
                        conf,
                    ));
                    sizes.push(SizePoint {
                        class_id: obj.class_id,
                        distance_m: slant_m,
                        diameter_px: det_side * std::f64::consts::SQRT_2,
                    });
                }
                for (c_conf, c_jx, c_jy, c_su) in clusters {
                    let c_side = side_px * (1.0 + c_su);
                    let (ccx, ccy) = (cx + c_jx, cy + c_jy);
                    frame_dets.push((
                        ccx - c_side / 2.0,
                        ccy - c_side / 2.0,
                        ccx + c_side / 2.0,
                        ccy + c_side / 2.0,
                        obj.class_id,
                        c_conf,
                    ));
                }
            }

            let fp_model = scenario.active_model(u, frame, None);
            for _ in 0..fp_model.false_positives_per_frame {
                let class_u = rng.gen::<f64>();
                let cx_u = rng.gen::<f64>();
                let cy_u = rng.gen::<f64>();
                let diam = lerp(
                    fp_model.fp_diameter_px_range.0,
                    fp_model.fp_diameter_px_range.1,
                    rng.gen::<f64>(),
                );
                let conf = conf_draw(&mut rng, fp_model.fp_conf_range);
                let side = diam / std::f64::consts::SQRT_2;
                let (w, h) = (uav.img_w as f64, uav.img_h as f64);
                if side >= w || side >= h {
                    continue; // draw consumed; box cannot fit the frame
                }
                let class_id = class_pool[(class_u * class_pool.len() as f64) as usize
                    % class_pool.len()];
                let cx = side / 2.0 + cx_u * (w - side);
                let cy = side / 2.0 + cy_u * (h - side);
                frame_dets.push((
                    cx - side / 2.0,
                    cy - side / 2.0,
                    cx + side / 2.0,
                    cy + side / 2.0,
                    class_id,
                    conf.clamp(0.0, 1.0),
                ));
            }

            detections.push(DetectionRecord { frame_id: frame, dets: frame_dets });
            gt.push(GtRecord { frame_id: frame, objects: frame_gt });
        }

        uav_outputs.push(UavOutput { telemetry, detections, gt });
    }

    Ok(SimResult { uavs: uav_outputs, sizes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::NorthOffset;

    fn origin() -> GeoPoint {
        GeoPoint::new(46.9, 7.4)
    }

    fn at(east_m: f64, north_m: f64) -> GeoPoint {
        geodesy::offset_to_gps(origin(), NorthOffset::new(east_m, north_m)).unwrap()
    }

    fn noiseless() -> DetectorModel {
        DetectorModel {
            miss_prob: 0.0,
            conf_range: (0.8, 0.8),
            center_jitter_px: 0.0,
            size_jitter_frac: 0.0,
            cluster_count: 0,
            false_positives_per_frame: 0,
            ..DetectorModel::default()
        }
    }

    fn hover_uav(detector: DetectorModel) -> UavSpec {
        UavSpec {
            focal_px: 2600.0,
            img_w: 3840,
            img_h: 2160,
            waypoints: vec![UavWaypoint {
                frame: 0,
                lat: origin().lat_deg,
                lon: origin().lon_deg,
                alt_m: 60.0,
                gimbal_pitch_deg: 45.0,
                heading_deg: 0.0,
            }],
            detector,
            overrides: vec![],
        }
    }

    fn parked_object(east_m: f64, north_m: f64, class_id: u32) -> ObjectSpec {
        let p = at(east_m, north_m);
        ObjectSpec {
            class_id,
            diameter_m: 4.0,
            waypoints: vec![ObjectWaypoint { frame: 0, lat: p.lat_deg, lon: p.lon_deg }],
        }
    }

    fn basic_scenario(detector: DetectorModel) -> Scenario {
        Scenario {
            seed: 7,
            frames: 10,
            fps: 30.0,
            uavs: vec![hover_uav(detector)],
            objects: vec![parked_object(5.0, 60.0, 0), parked_object(-12.0, 70.0, 1)],
        }
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let result = run(&basic_scenario(noiseless())).unwrap();
        let uav = &result.uavs[0];
        assert_eq!(uav.telemetry.len(), 10);
        for (dets, gt) in uav.detections.iter().zip(&uav.gt) {
            assert_eq!(dets.dets.len(), gt.objects.len());
            for (d, g) in dets.dets.iter().zip(&gt.objects) {
                assert!(g.in_view);
                assert!((d.0 - g.x1).abs() < 1e-9);
                assert!((d.1 - g.y1).abs() < 1e-9);
                assert!((d.2 - g.x2).abs() < 1e-9);
                assert!((d.3 - g.y2).abs() < 1e-9);
                assert_eq!(d.4, g.class_id);
                assert_eq!(d.5, 0.8);
            }
        }
        // Size samples carry the true diagonal at the true slant range.
        let p = &result.sizes[0];
        let g = &uav.gt[0].objects[0];
        let diag = ((g.x2 - g.x1).powi(2) + (g.y2 - g.y1).powi(2)).sqrt();
        assert!((p.diameter_px - diag).abs() < 1e-9);
        assert!(p.distance_m > 60.0 && p.distance_m < 120.0);
    }

    #[test]
    fn certain_misses_produce_no_detections_but_full_ground_truth() {
        let result = run(&basic_scenario(DetectorModel { miss_prob: 1.0, ..noiseless() })).unwrap();
        let uav = &result.uavs[0];
        assert!(uav.detections.iter().all(|d| d.dets.is_empty()));
        assert!(uav.gt.iter().all(|g| g.objects.len() == 2));
        assert!(result.sizes.is_empty());
    }

    #[test]
    fn clusters_outlive_a_missed_primary_detection() {
        let detector = DetectorModel {
            miss_prob: 1.0,
            cluster_count: 3,
            cluster_conf_range: (0.3, 0.4),
            ..noiseless()
        };
        let result = run(&basic_scenario(detector)).unwrap();
        for dets in &result.uavs[0].detections {
            assert_eq!(dets.dets.len(), 6, "3 cluster boxes per object survive the miss");
            assert!(dets.dets.iter().all(|d| (0.3..=0.4).contains(&d.5)));
        }
        assert!(result.sizes.is_empty(), "size samples come only from primary detections");
    }

    #[test]
    fn runs_are_reproducible() {
        let scenario = basic_scenario(DetectorModel {
            cluster_count: 3,
            false_positives_per_frame: 2,
            ..DetectorModel::default()
        });
        let a = run(&scenario).unwrap();
        let b = run(&scenario).unwrap();
        assert_eq!(a.uavs, b.uavs);
        assert_eq!(a.sizes, b.sizes);
        let c = run(&Scenario { seed: 8, ..scenario }).unwrap();
        assert_ne!(a.uavs[0].detections, c.uavs[0].detections, "seed changes the noise");
    }

    #[test]
    fn ground_truth_boxes_geolocate_back_to_the_object() {
        let result = run(&basic_scenario(noiseless())).unwrap();
        let uav = &result.uavs[0];
        let cam = uav.telemetry[0].camera().unwrap();
        for g in &uav.gt[0].objects {
            let center = cam.pixel_from_image_coords((g.x1 + g.x2) / 2.0, (g.y1 + g.y2) / 2.0);
            let loc = geodesy::pixel_to_gps(&cam, center).unwrap();
            let err = geodesy::gps_to_offset(GeoPoint::new(g.lat, g.lon), loc.position)
                .unwrap()
                .norm_m();
            assert!(err < 0.5, "round-trip error {err} m");
        }
    }

    #[test]
    fn waypoints_interpolate_linearly_and_heading_takes_the_short_arc() {
        let mut uav = hover_uav(noiseless());
        uav.waypoints = vec![
            UavWaypoint {
                frame: 0,
                lat: 46.9,
                lon: 7.4,
                alt_m: 50.0,
                gimbal_pitch_deg: 40.0,
                heading_deg: 350.0,
            },
            UavWaypoint {
                frame: 10,
                lat: 46.91,
                lon: 7.41,
                alt_m: 70.0,
                gimbal_pitch_deg: 60.0,
                heading_deg: 10.0,
            },
        ];
        let scenario = Scenario {
            seed: 1,
            frames: 11,
            fps: 30.0,
            uavs: vec![uav],
            objects: vec![parked_object(0.0, 80.0, 0)],
        };
        let result = run(&scenario).unwrap();
        let t5 = &result.uavs[0].telemetry[5];
        assert!((t5.lat - 46.905).abs() < 1e-12);
        assert!((t5.alt_m - 60.0).abs() < 1e-12);
        assert!((t5.gimbal_pitch_deg - 50.0).abs() < 1e-12);
        assert!(
            (t5.heading_deg - 0.0).abs() < 1e-9,
            "350°→10° passes through north, got {}",
            t5.heading_deg
        );
        let t2 = &result.uavs[0].telemetry[2];
        assert!((t2.heading_deg - 354.0).abs() < 1e-9);
    }

    #[test]
    fn overrides_silence_one_object_in_their_window_only() {
        let mut scenario = basic_scenario(noiseless());
        scenario.uavs[0].overrides = vec![DetectorOverride {
            start_frame: 3,
            end_frame: 6,
            object: Some(0),
            model: DetectorModel { miss_prob: 1.0, ..noiseless() },
        }];
        let result = run(&scenario).unwrap();
        for (f, dets) in result.uavs[0].detections.iter().enumerate() {
            let classes: Vec<u32> = dets.dets.iter().map(|d| d.4).collect();
            if (3..6).contains(&(f as u64)) {
                assert_eq!(classes, vec![1], "frame {f}: object 0 silenced, object 1 kept");
            } else {
                assert_eq!(classes, vec![0, 1], "frame {f}: both objects present");
            }
        }
    }

    #[test]
    fn one_objects_noise_does_not_shift_anothers_draws() {
        let noisy = DetectorModel { center_jitter_px: 3.0, ..DetectorModel::default() };
        let base = basic_scenario(noisy);
        let mut silenced = base.clone();
        silenced.uavs[0].overrides = vec![DetectorOverride {
            start_frame: 0,
            end_frame: 10,
            object: Some(0),
            model: DetectorModel { miss_prob: 1.0, ..noisy },
        }];
        let a = run(&base).unwrap();
        let b = run(&silenced).unwrap();
        for (da, db) in a.uavs[0].detections.iter().zip(&b.uavs[0].detections) {
            let class1_a: Vec<_> = da.dets.iter().filter(|d| d.4 == 1).collect();
            let class1_b: Vec<_> = db.dets.iter().filter(|d| d.4 == 1).collect();
            assert_eq!(class1_a, class1_b, "object 1's noise stream shifted");
        }
    }

    #[test]
    fn false_positives_fill_the_frame_within_their_ranges() {
        let detector = DetectorModel {
            miss_prob: 1.0,
            false_positives_per_frame: 4,
            fp_conf_range: (0.5, 0.6),
            fp_diameter_px_range: (20.0, 80.0),
            ..DetectorModel::default()
        };
        let result = run(&basic_scenario(detector)).unwrap();
        let mut seen = 0;
        for dets in &result.uavs[0].detections {
            assert_eq!(dets.dets.len(), 4);
            for &(x1, y1, x2, y2, class_id, conf) in &dets.dets {
                assert!((0.5..=0.6).contains(&conf));
                assert!(x1 >= 0.0 && y1 >= 0.0 && x2 <= 3840.0 && y2 <= 2160.0);
                let diag = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt();
                assert!((20.0 - 1e-9..=80.0 + 1e-9).contains(&diag));
                assert!(class_id == 0 || class_id == 1);
                seen += 1;
            }
        }
        assert_eq!(seen, 40);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = basic_scenario(noiseless());
        s.frames = 0;
        assert!(matches!(run(&s), Err(SimError::InvalidScenario(_))));

        let mut s = basic_scenario(noiseless());
        s.fps = 0.0;
        assert!(matches!(run(&s), Err(SimError::InvalidScenario(_))));

        let mut s = basic_scenario(noiseless());
        s.objects[0].waypoints.clear();
        assert!(matches!(run(&s), Err(SimError::InvalidScenario(_))));

        let mut s = basic_scenario(noiseless());
        s.uavs[0].overrides = vec![DetectorOverride {
            start_frame: 5,
            end_frame: 5,
            object: None,
            model: noiseless(),
        }];
        assert!(matches!(run(&s), Err(SimError::InvalidScenario(_))));

        let mut s = basic_scenario(noiseless());
        s.uavs[0].detector.conf_range = (0.9, 0.2);
        assert!(matches!(run(&s), Err(SimError::InvalidScenario(_))));

        let mut s = basic_scenario(noiseless());
        s.uavs[0].waypoints[0].gimbal_pitch_deg = 0.0;
        assert!(matches!(run(&s), Err(SimError::Camera { .. })));
    }

    #[test]
    fn moving_objects_follow_their_waypoints() {
        let start = at(0.0, 60.0);
        let end = at(20.0, 60.0);
        let object = ObjectSpec {
            class_id: 0,
            diameter_m: 4.0,
            waypoints: vec![
                ObjectWaypoint { frame: 0, lat: start.lat_deg, lon: start.lon_deg },
                ObjectWaypoint { frame: 8, lat: end.lat_deg, lon: end.lon_deg },
            ],
        };
        let scenario = Scenario {
            seed: 3,
            frames: 9,
            fps: 30.0,
            uavs: vec![hover_uav(noiseless())],
            objects: vec![object],
        };
        let result = run(&scenario).unwrap();
        let gt = &result.uavs[0].gt;
        let mid = GeoPoint::new(gt[4].objects[0].lat, gt[4].objects[0].lon);
        let err = geodesy::gps_to_offset(at(10.0, 60.0), mid).unwrap().norm_m();
        assert!(err < 0.01, "midpoint off by {err} m");
        let x_positions: Vec<f64> =
            gt.iter().map(|g| (g.objects[0].x1 + g.objects[0].x2) / 2.0).collect();
        assert!(x_positions.windows(2).all(|w| w[1] > w[0]), "object drifts right in the image");
    }
}
