//! Built-in throughput measurement.
//!
//! Two standard workloads, matching the system's design targets:
//!
//! * the detection pipeline: one camera, one class, a dense pre-suppression
//!   detection load clustered around ~50 ground objects, against the
//!   default 600×600 memory map;
//! * the anomaly projector: a 480×270 heatmap splatted into the default
//!   coarse map every frame.
//!
//! Both run a short untimed warmup, then report the mean per-frame wall
//! time. Generation of synthetic inputs happens outside the timed section.

use crate::anomaly::{AnomalyAggregator, AnomalyConfig, AnomalyError, FrameHeatmap};
use crate::camera::CameraState;
use crate::geodesy::GeoPoint;
use crate::vod::{Detection, PipelineError, VodConfig, VodPipeline};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// One workload's timing summary.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchReport {
    pub name: String,
    pub frames: usize,
    pub total_ms: f64,
    pub mean_ms_per_frame: f64,
    pub max_ms_per_frame: f64,
    pub fps: f64,
}

fn report(name: &str, frame_ms: &[f64]) -> BenchReport {
    let total_ms: f64 = frame_ms.iter().sum();
    let mean = total_ms / frame_ms.len() as f64;
    BenchReport {
        name: name.to_string(),
        frames: frame_ms.len(),
        total_ms,
        mean_ms_per_frame: mean,
        max_ms_per_frame: frame_ms.iter().copied().fold(0.0, f64::max),
        fps: if mean > 0.0 { 1000.0 / mean } else { f64::INFINITY },
    }
}

fn bench_camera() -> CameraState {
    CameraState::new(GeoPoint::new(46.9, 7.4), 60.0, 45.0, 0.0, 1350.0, 3840, 2160)
        .expect("static bench camera is valid")
}

/// Builds one frame's synthetic detector output: `count` boxes clustered
/// around 50 fixed ground objects, single class, full confidence spread.
fn synthetic_detections(rng: &mut ChaCha8Rng, centers: &[(f64, f64)], count: usize) -> Vec<Detection> {
    (0..count)
        .map(|_| {
            let (cx, cy) = centers[rng.gen_range(0..centers.len())];
            let (jx, jy) = (rng.gen_range(-25.0..25.0), rng.gen_range(-25.0..25.0));
            let side = rng.gen_range(18.0..60.0);
            Detection::new(
                cx + jx - side / 2.0,
                cy + jy - side / 2.0,
                cx + jx + side / 2.0,
                cy + jy + side / 2.0,
                0,
                rng.gen_range(0.05..0.95),
            )
            .expect("synthetic box is valid")
        })
        .collect()
}

/// Times the full per-frame pipeline (geolocate, boost, splat, decay,
/// suppression) under a dense detection load.
pub fn bench_pipeline(frames: usize, dets_per_frame: usize, seed: u64) -> Result<BenchReport, PipelineError> {
    let cam = bench_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(f64, f64)> = (0..50)
        .map(|_| (rng.gen_range(200.0..3640.0), rng.gen_range(300.0..2000.0)))
        .collect();
    let warmup = 3usize;
    let inputs: Vec<Vec<Detection>> = (0..frames + warmup)
        .map(|_| synthetic_detections(&mut rng, &centers, dets_per_frame))
        .collect();

    let mut pipeline = VodPipeline::new(VodConfig::default())?;
    let mut frame_ms = Vec::with_capacity(frames);
    for (i, dets) in inputs.iter().enumerate() {
        let start = Instant::now();
        let result = pipeline.process_frame(i as u64, &cam, dets)?;
        let elapsed = start.elapsed().as_secs_f64() * 1000.0;
        std::hint::black_box(&result);
        if i >= warmup {
            frame_ms.push(elapsed);
        }
    }
    Ok(report(&format!("pipeline_{dets_per_frame}_detections_600x600_map"), &frame_ms))
}

/// Times heatmap-to-map projection for a 480×270 frame heatmap.
pub fn bench_heatmap(frames: usize, seed: u64) -> Result<BenchReport, AnomalyError> {
    let cam = bench_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (480usize, 270usize);
    let values: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
    let heatmap = FrameHeatmap::new(w, h, values)?;

    let mut agg = AnomalyAggregator::new(AnomalyConfig::default(), cam.position())?;
    let warmup = 3usize;
    let mut frame_ms = Vec::with_capacity(frames);
    for i in 0..frames + warmup {
        let start = Instant::now();
        agg.step(&cam, &heatmap)?;
        let elapsed = start.elapsed().as_secs_f64() * 1000.0;
        if i >= warmup {
            frame_ms.push(elapsed);
        }
    }
    std::hint::black_box(agg.regions());
    Ok(report("heatmap_projection_480x270", &frame_ms))
}
