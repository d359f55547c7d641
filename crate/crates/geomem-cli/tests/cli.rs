//! End-to-end tests for the `geomem` binary: exit codes and the JSON error
//! contract, command output shapes, byte-identical determinism under a fixed
//! seed, and a full simulate → fit → vod → track → eval round trip.

use std::path::Path;
use std::process::{Command, Output};

use geomem::geodesy::{self, GeoPoint, NorthOffset};
use geomem::sim::{DetectorModel, ObjectSpec, ObjectWaypoint, Scenario, UavSpec, UavWaypoint};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geomem"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "expected success, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Parses the machine-readable error report from stderr and returns its kind.
fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|e| panic!("stderr is a JSON error report ({e}): {:?}", out.stderr));
    v["error"]["kind"].as_str().expect("kind is a string").to_string()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exits normally")
}

/// A hovering UAV looking 60° down from 120 m with a 2600 px focal length.
fn hover_uav(detector: DetectorModel) -> UavSpec {
    UavSpec {
        focal_px: 2600.0,
        img_w: 3840,
        img_h: 2160,
        waypoints: vec![UavWaypoint {
            frame: 0,
            lat: 47.0,
            lon: 8.0,
            alt_m: 120.0,
            gimbal_pitch_deg: 60.0,
            heading_deg: 0.0,
        }],
        detector,
        overrides: Vec::new(),
    }
}

/// A stationary object placed by metric offset from the camera position.
fn stationary_object(class_id: u32, east_m: f64, north_m: f64) -> ObjectSpec {
    let position = geodesy::offset_to_gps(GeoPoint::new(47.0, 8.0), NorthOffset::new(east_m, north_m))
        .expect("offset stays clear of the poles");
    ObjectSpec {
        class_id,
        diameter_m: 4.0,
        waypoints: vec![ObjectWaypoint { frame: 0, lat: position.lat_deg, lon: position.lon_deg }],
    }
}

/// Detector that reproduces ground truth exactly: no misses, no jitter,
/// pinned confidence, no clutter.
fn noiseless_detector() -> DetectorModel {
    DetectorModel {
        miss_prob: 0.0,
        conf_range: (0.9, 0.9),
        center_jitter_px: 0.0,
        size_jitter_frac: 0.0,
        cluster_count: 0,
        false_positives_per_frame: 0,
        ..DetectorModel::default()
    }
}

/// The camera above looks 60° down, so the image center hits the ground
/// 120/tan(60°) ≈ 69.3 m north; objects sit around that point.
fn noiseless_scenario() -> Scenario {
    Scenario {
        seed: 5,
        frames: 40,
        fps: 10.0,
        uavs: vec![hover_uav(noiseless_detector())],
        objects: vec![stationary_object(0, -10.0, 69.0), stationary_object(1, 12.0, 72.0)],
    }
}

fn write_scenario(path: &Path, scenario: &Scenario) {
    std::fs::write(path, serde_json::to_string_pretty(scenario).unwrap()).unwrap();
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn simulate_into(dir: &Path, scenario: &Scenario) {
    let scenario_path = dir.join("scenario.json");
    write_scenario(&scenario_path, scenario);
    let out = run(&[
        "simulate",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    stdout_json(&out);
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"][..], &["geolocate", "--help"][..]] {
        let out = run(args);
        assert_eq!(exit_code(&out), 0, "{args:?}");
        assert!(!out.stdout.is_empty(), "{args:?} prints usage text");
    }
}

#[test]
fn unknown_subcommand_is_a_validation_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(exit_code(&out), 1);
    assert_eq!(error_kind(&out), "validation");
}

#[test]
fn missing_required_argument_is_a_validation_error() {
    let out = run(&["fit-size-model", "--sizes", "only-half-the-args.csv"]);
    assert_eq!(exit_code(&out), 1);
    assert_eq!(error_kind(&out), "validation");
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "vod",
        "--telemetry",
        dir.path().join("absent.jsonl").to_str().unwrap(),
        "--detections",
        dir.path().join("absent2.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("out.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert_eq!(error_kind(&out), "io");
}

#[test]
fn malformed_config_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, br#"{"vod": {"iou_threshold": 2.0}}"#).unwrap();
    let out = run(&["--config", config.to_str().unwrap(), "bench", "--frames", "1"]);
    assert_eq!(exit_code(&out), 1);
    assert_eq!(error_kind(&out), "validation");
}

#[test]
fn absent_config_file_is_an_io_error() {
    let out = run(&["--config", "/nonexistent/config.json", "bench", "--frames", "1"]);
    assert_eq!(exit_code(&out), 2);
    assert_eq!(error_kind(&out), "io");
}

#[test]
fn default_config_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, geomem::config::Config::default().to_json_pretty()).unwrap();
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "geolocate",
        "--lat",
        "47",
        "--lon",
        "8",
        "--alt-m",
        "50",
        "--pitch-deg",
        "30",
        "--focal-px",
        "2600",
    ]);
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn geolocate_reports_the_projection_intermediates() {
    // Pixel (2920, 580) in a 3840×2160 image is a (1000, −500) center
    // offset; from 50 m up at 30° pitch the ray lands 144.27 m ahead.
    let out = run(&[
        "geolocate", "--lat", "47", "--lon", "8", "--alt-m", "50", "--pitch-deg", "30",
        "--focal-px", "2600", "--px", "2920", "--py", "580",
    ]);
    let report = stdout_json(&out);
    let p = &report["pixel_to_gps"];
    assert_eq!(p["status"], "located");
    let close = |v: &serde_json::Value, want: f64| {
        let got = v.as_f64().unwrap();
        assert!(
            (got - want).abs() <= 1e-9 * want.abs(),
            "got {got}, want {want}"
        );
    };
    close(&p["alpha_deg"], 10.885527054658738);
    close(&p["depression_deg"], 19.114472945341262);
    close(&p["forward_m"], 144.27351215522321);
    close(&p["effective_focal_px"], 2647.6404589747453);
    close(&p["right_m"], 57.670971776779345);
    close(&p["slant_m"], 152.69199818459165);
    // Heading 0: camera-frame forward/right are exactly north/east.
    close(&p["north_m"], 144.27351215522321);
    close(&p["east_m"], 57.670971776779345);
}

#[test]
fn geolocate_reports_horizon_geometry() {
    let out = run(&[
        "geolocate", "--lat", "0", "--lon", "0", "--alt-m", "100", "--pitch-deg", "15",
        "--focal-px", "2600",
    ]);
    let report = stdout_json(&out);
    let dip = report["horizon"]["dip_deg"].as_f64().unwrap();
    let row = report["horizon"]["row_offset_px"].as_f64().unwrap();
    assert!((dip - 0.16049258946711834).abs() < 1e-12);
    assert!((row - -688.8679212521429).abs() < 1e-9);
}

#[test]
fn geolocate_projects_a_target_back_into_the_image() {
    let out = run(&[
        "geolocate", "--lat", "47", "--lon", "8", "--alt-m", "50", "--pitch-deg", "30",
        "--focal-px", "2600", "--px", "2920", "--py", "580",
    ]);
    let report = stdout_json(&out);
    let lat = report["pixel_to_gps"]["lat"].as_f64().unwrap();
    let lon = report["pixel_to_gps"]["lon"].as_f64().unwrap();

    // Feeding the located point back as a target recovers the pixel.
    let out = run(&[
        "geolocate", "--lat", "47", "--lon", "8", "--alt-m", "50", "--pitch-deg", "30",
        "--focal-px", "2600", "--target-lat", &lat.to_string(), "--target-lon", &lon.to_string(),
    ]);
    let report = stdout_json(&out);
    let t = &report["gps_to_pixel"];
    assert_eq!(t["status"], "projected");
    assert_eq!(t["in_frame"], true);
    assert!((t["px"].as_f64().unwrap() - 2920.0).abs() < 0.5);
    assert!((t["py"].as_f64().unwrap() - 580.0).abs() < 0.5);
}

#[test]
fn geolocate_labels_rays_above_the_horizon() {
    let out = run(&[
        "geolocate", "--lat", "47", "--lon", "8", "--alt-m", "50", "--pitch-deg", "2",
        "--focal-px", "2600", "--px", "1920", "--py", "0",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["pixel_to_gps"]["status"], "above_horizon");
}

#[test]
fn simulate_is_byte_identical_under_a_fixed_seed() {
    let noisy = DetectorModel {
        cluster_count: 3,
        false_positives_per_frame: 2,
        ..DetectorModel::default()
    };
    let scenario = Scenario {
        seed: 11,
        frames: 25,
        fps: 10.0,
        uavs: vec![hover_uav(noisy)],
        objects: vec![stationary_object(0, -10.0, 69.0), stationary_object(1, 12.0, 72.0)],
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_into(a.path(), &scenario);
    simulate_into(b.path(), &scenario);
    for file in ["uav0_telemetry.jsonl", "uav0_detections.jsonl", "uav0_gt.jsonl", "sizes.csv"] {
        assert_eq!(
            read_bytes(&a.path().join(file)),
            read_bytes(&b.path().join(file)),
            "{file} differs between identical runs"
        );
    }

    // A different seed changes the detections but not the flight path.
    let c = tempfile::tempdir().unwrap();
    simulate_into(c.path(), &Scenario { seed: 12, ..scenario });
    assert_eq!(
        read_bytes(&a.path().join("uav0_telemetry.jsonl")),
        read_bytes(&c.path().join("uav0_telemetry.jsonl"))
    );
    assert_ne!(
        read_bytes(&a.path().join("uav0_detections.jsonl")),
        read_bytes(&c.path().join("uav0_detections.jsonl"))
    );
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let scenario = noiseless_scenario();
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("scenario.json");
    write_scenario(&scenario_path, &scenario);
    let out = run(&[
        "--seed",
        "99",
        "simulate",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["seed"], 99);
}

#[test]
fn noiseless_run_scores_perfectly_through_vod_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &noiseless_scenario());
    let telemetry = dir.path().join("uav0_telemetry.jsonl");
    let detections = dir.path().join("uav0_detections.jsonl");
    let results = dir.path().join("results.jsonl");

    let out = run(&[
        "vod",
        "--telemetry",
        telemetry.to_str().unwrap(),
        "--detections",
        detections.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["frames"], 40);
    assert_eq!(summary["final_detections"], 80, "two exact boxes survive every frame");

    let out = run(&[
        "eval",
        "--pred",
        results.to_str().unwrap(),
        "--gt",
        dir.path().join("uav0_gt.jsonl").to_str().unwrap(),
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["detection"]["precision"], 1.0);
    assert_eq!(report["detection"]["recall"], 1.0);
    assert_eq!(report["detection"]["ap50"], 1.0);
}

#[test]
fn vod_is_deterministic_and_no_boost_suppresses_low_confidence() {
    // Confidence pinned at 0.3: below the 0.5 output floor, so nothing
    // survives without accumulated map support.
    let scenario = Scenario {
        seed: 7,
        uavs: vec![hover_uav(DetectorModel {
            conf_range: (0.3, 0.3),
            ..noiseless_detector()
        })],
        ..noiseless_scenario()
    };
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &scenario);
    let telemetry = dir.path().join("uav0_telemetry.jsonl");
    let detections = dir.path().join("uav0_detections.jsonl");

    let boosted_a = dir.path().join("boosted_a.jsonl");
    let boosted_b = dir.path().join("boosted_b.jsonl");
    let plain = dir.path().join("plain.jsonl");
    for (out_path, extra) in
        [(&boosted_a, None), (&boosted_b, None), (&plain, Some("--no-boost"))]
    {
        let mut args = vec![
            "vod",
            "--telemetry",
            telemetry.to_str().unwrap(),
            "--detections",
            detections.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ];
        args.extend(extra);
        stdout_json(&run(&args));
    }

    assert_eq!(read_bytes(&boosted_a), read_bytes(&boosted_b), "vod runs differ");

    let finals = |path: &Path| -> usize {
        let results: Vec<geomem::vod::FrameResult> = geomem::io::read_jsonl(path).unwrap();
        results.iter().map(|r| r.final_detections.len()).sum()
    };
    assert_eq!(finals(&plain), 0, "0.3-confidence boxes never pass without boosting");
    assert!(finals(&boosted_a) > 40, "support accumulates and rescues both objects");
}

#[test]
fn fuse_with_one_stream_matches_vod_exactly() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &noiseless_scenario());
    let telemetry = dir.path().join("uav0_telemetry.jsonl");
    let detections = dir.path().join("uav0_detections.jsonl");

    let vod_out = dir.path().join("vod.jsonl");
    stdout_json(&run(&[
        "vod",
        "--telemetry",
        telemetry.to_str().unwrap(),
        "--detections",
        detections.to_str().unwrap(),
        "--out",
        vod_out.to_str().unwrap(),
    ]));

    let fuse_dir = dir.path().join("fused");
    let spec = format!("{},{}", telemetry.display(), detections.display());
    let summary = stdout_json(&run(&[
        "fuse",
        "--stream",
        &spec,
        "--out-dir",
        fuse_dir.to_str().unwrap(),
    ]));
    assert_eq!(summary["streams"], 1);

    // With a single stream the merged neighborhood support equals the
    // stream's own, so fusion degenerates to the plain pipeline.
    assert_eq!(
        read_bytes(&vod_out),
        read_bytes(&fuse_dir.join("stream0_results.jsonl")),
        "single-stream fusion diverged from the plain pipeline"
    );
}

#[test]
fn track_emits_geolocated_rows_readable_by_the_library() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &noiseless_scenario());
    let tracks = dir.path().join("tracks.csv");
    let summary = stdout_json(&run(&[
        "track",
        "--telemetry",
        dir.path().join("uav0_telemetry.jsonl").to_str().unwrap(),
        "--detections",
        dir.path().join("uav0_detections.jsonl").to_str().unwrap(),
        "--out",
        tracks.to_str().unwrap(),
    ]));
    assert_eq!(summary["tracks"], 2, "two stationary objects, one track each");

    let rows = geomem::io::read_track_csv(&tracks).unwrap();
    assert_eq!(rows.len(), 80);
    assert!(rows.iter().all(|r| r.lat.is_some() && r.lon.is_some()));

    let ids: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.track_id).collect();
    assert_eq!(ids.len(), 2);

    // Tracking metrics against ground truth are clean: no identity switches.
    let results = dir.path().join("results.jsonl");
    stdout_json(&run(&[
        "vod",
        "--telemetry",
        dir.path().join("uav0_telemetry.jsonl").to_str().unwrap(),
        "--detections",
        dir.path().join("uav0_detections.jsonl").to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
    ]));
    let report = stdout_json(&run(&[
        "eval",
        "--pred",
        results.to_str().unwrap(),
        "--gt",
        dir.path().join("uav0_gt.jsonl").to_str().unwrap(),
        "--tracks",
        tracks.to_str().unwrap(),
    ]));
    assert_eq!(report["tracking"]["id_switches"], 0);
    assert_eq!(report["tracking"]["recall"], 1.0);
}

#[test]
fn track_pixel_baseline_runs_without_geojson() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &noiseless_scenario());
    let tracks = dir.path().join("tracks.csv");
    let summary = stdout_json(&run(&[
        "track",
        "--telemetry",
        dir.path().join("uav0_telemetry.jsonl").to_str().unwrap(),
        "--detections",
        dir.path().join("uav0_detections.jsonl").to_str().unwrap(),
        "--out",
        tracks.to_str().unwrap(),
        "--pixel-baseline",
    ]));
    assert_eq!(summary["tracks"], 2);

    let out = run(&[
        "track",
        "--telemetry",
        dir.path().join("uav0_telemetry.jsonl").to_str().unwrap(),
        "--detections",
        dir.path().join("uav0_detections.jsonl").to_str().unwrap(),
        "--out",
        tracks.to_str().unwrap(),
        "--pixel-baseline",
        "--geojson",
        dir.path().join("tracks.geojson").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1, "pixel baseline has no GPS geometry to export");
    assert_eq!(error_kind(&out), "validation");
}

#[test]
fn dump_map_prints_csv_with_live_cells() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &noiseless_scenario());
    let maps_dir = dir.path().join("maps");
    stdout_json(&run(&[
        "vod",
        "--telemetry",
        dir.path().join("uav0_telemetry.jsonl").to_str().unwrap(),
        "--detections",
        dir.path().join("uav0_detections.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("results.jsonl").to_str().unwrap(),
        "--dump-maps",
        maps_dir.to_str().unwrap(),
    ]));

    let map_path = maps_dir.join("class_0.map");
    assert!(map_path.exists(), "vod dumps one map per class");
    let out = run(&["dump-map", "--map", map_path.to_str().unwrap(), "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,col,lat,lon,value"));
    assert!(lines.next().is_some(), "the map accumulated at least one live cell");

    let geo = run(&["dump-map", "--map", map_path.to_str().unwrap(), "--format", "geojson"]);
    let parsed = stdout_json(&geo);
    assert_eq!(parsed["type"], "FeatureCollection");
}

#[test]
fn bench_reports_both_workloads() {
    let out = run(&["bench", "--frames", "3", "--dets-per-frame", "50", "--heatmap-frames", "3"]);
    let reports = stdout_json(&out);
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["name"], "pipeline_50_detections_600x600_map");
    assert_eq!(reports[1]["name"], "heatmap_projection_480x270");
    assert!(reports[0]["fps"].as_f64().unwrap() > 0.0);
}
