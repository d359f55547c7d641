//! Detection and tracking quality metrics.
//!
//! Detection scoring matches predictions to ground truth greedily by
//! descending IoU within each (frame, class) group — the usual single-image
//! protocol — and reports precision/recall/F1 at a fixed IoU, all-point
//! interpolated average precision at IoU 0.5, and mean recall over the
//! IoU ladder 0.50:0.05:0.95 with at most 100 predictions per frame.
//!
//! Tracking scoring matches track points to ground-truth objects per frame
//! by ground distance, then counts identity switches (a matched object's
//! track id differs from its previously matched id) and fragmentations
//! (matched, then present-but-unmatched, then matched again).

use crate::geodesy::{self, GeoPoint};
use std::collections::BTreeMap;

/// One predicted box with its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredBox {
    pub frame_id: u64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub class_id: u32,
    pub score: f64,
}

/// One ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub frame_id: u64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub class_id: u32,
    /// Stable object identity, for tracking metrics and per-object recall.
    pub object: usize,
}

fn iou(a: &PredBox, b: &GtBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let ua = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    inter / ua
}

/// Aggregate detection scores at one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DetectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedily matches one frame's predictions to ground truth: candidate
/// pairs of the same class with IoU ≥ `iou_thr`, taken in descending-IoU
/// order (ties: lower prediction index, then lower ground-truth index).
/// Returns (prediction index, ground-truth index) pairs.
pub fn greedy_match_frame(preds: &[PredBox], gts: &[GtBox], iou_thr: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            if p.class_id != g.class_id {
                continue;
            }
            let v = iou(p, g);
            if v >= iou_thr {
                candidates.push((v, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; preds.len()];
    let mut used_g = vec![false; gts.len()];
    let mut matches = Vec::new();
    for (_, i, j) in candidates {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            matches.push((i, j));
        }
    }
    matches
}

fn group_by_frame<'a, T, F: Fn(&T) -> u64>(items: &'a [T], key: F) -> BTreeMap<u64, Vec<&'a T>> {
    let mut map: BTreeMap<u64, Vec<&T>> = BTreeMap::new();
    for item in items {
        map.entry(key(item)).or_default().push(item);
    }
    map
}

/// Precision/recall/F1 of a fixed prediction set at one IoU threshold.
/// An empty prediction set has precision 1; an empty ground truth has
/// recall 1 (nothing was there to find).
pub fn detection_prf(preds: &[PredBox], gts: &[GtBox], iou_thr: f64) -> DetectionScore {
    let preds_by_frame = group_by_frame(preds, |p| p.frame_id);
    let gts_by_frame = group_by_frame(gts, |g| g.frame_id);
    let mut tp = 0usize;
    let frames: std::collections::BTreeSet<u64> =
        preds_by_frame.keys().chain(gts_by_frame.keys()).copied().collect();
    for frame in frames {
        let fp: Vec<PredBox> =
            preds_by_frame.get(&frame).map(|v| v.iter().map(|p| **p).collect()).unwrap_or_default();
        let fg: Vec<GtBox> =
            gts_by_frame.get(&frame).map(|v| v.iter().map(|g| **g).collect()).unwrap_or_default();
        tp += greedy_match_frame(&fp, &fg, iou_thr).len();
    }
    let false_positives = preds.len() - tp;
    let false_negatives = gts.len() - tp;
    let precision = if preds.is_empty() { 1.0 } else { tp as f64 / preds.len() as f64 };
    let recall = if gts.is_empty() { 1.0 } else { tp as f64 / gts.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScore {
        true_positives: tp,
        false_positives,
        false_negatives,
        precision,
        recall,
        f1,
    }
}

/// All-point interpolated average precision at one IoU threshold.
/// Predictions rank by descending score (ties: frame, then input order);
/// each prediction claims the best still-unmatched ground-truth box of its
/// frame and class. No ground truth: 1 if there are also no predictions,
/// else 0.
pub fn average_precision(preds: &[PredBox], gts: &[GtBox], iou_thr: f64) -> f64 {
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .unwrap()
            .then(preds[a].frame_id.cmp(&preds[b].frame_id))
            .then(a.cmp(&b))
    });

    let mut gt_index_by_frame: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (j, g) in gts.iter().enumerate() {
        gt_index_by_frame.entry(g.frame_id).or_default().push(j);
    }
    let mut gt_used = vec![false; gts.len()];
    let mut is_tp = Vec::with_capacity(preds.len());
    for &i in &order {
        let p = &preds[i];
        let mut best: Option<(f64, usize)> = None;
        if let Some(frame_gts) = gt_index_by_frame.get(&p.frame_id) {
            for &j in frame_gts {
                if gt_used[j] || gts[j].class_id != p.class_id {
                    continue;
                }
                let v = iou(p, &gts[j]);
                if v >= iou_thr && best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, j));
                }
            }
        }
        match best {
            Some((_, j)) => {
                gt_used[j] = true;
                is_tp.push(true);
            }
            None => is_tp.push(false),
        }
    }

    let n_gt = gts.len() as f64;
    let mut cumulative_tp = 0usize;
    let mut recalls = Vec::with_capacity(is_tp.len());
    let mut precisions = Vec::with_capacity(is_tp.len());
    for (k, &tp) in is_tp.iter().enumerate() {
        if tp {
            cumulative_tp += 1;
        }
        recalls.push(cumulative_tp as f64 / n_gt);
        precisions.push(cumulative_tp as f64 / (k + 1) as f64);
    }
    // Precision envelope from the right, then sum over recall increments.
    for k in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[k] = precisions[k].max(precisions[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..recalls.len() {
        if recalls[k] > prev_recall {
            ap += (recalls[k] - prev_recall) * precisions[k];
            prev_recall = recalls[k];
        }
    }
    ap
}

/// Mean recall over IoU thresholds 0.50, 0.55, …, 0.95 keeping at most
/// `top_k` highest-score predictions per frame.
pub fn mean_recall(preds: &[PredBox], gts: &[GtBox], top_k: usize) -> f64 {
    if gts.is_empty() {
        return 1.0;
    }
    let preds_by_frame = group_by_frame(preds, |p| p.frame_id);
    let gts_by_frame = group_by_frame(gts, |g| g.frame_id);
    let mut truncated: BTreeMap<u64, Vec<PredBox>> = BTreeMap::new();
    for (frame, list) in &preds_by_frame {
        let mut boxes: Vec<PredBox> = list.iter().map(|p| **p).collect();
        boxes.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        boxes.truncate(top_k);
        truncated.insert(*frame, boxes);
    }
    let mut total = 0.0;
    let mut steps = 0usize;
    let mut thr = 0.50;
    while thr < 0.9501 {
        let mut tp = 0usize;
        for (frame, fg) in &gts_by_frame {
            let fg: Vec<GtBox> = fg.iter().map(|g| **g).collect();
            let empty = Vec::new();
            let fp = truncated.get(frame).unwrap_or(&empty);
            tp += greedy_match_frame(fp, &fg, thr).len();
        }
        total += tp as f64 / gts.len() as f64;
        steps += 1;
        thr += 0.05;
    }
    total / steps as f64
}

/// One track's position claim in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame_id: u64,
    pub track_id: u64,
    pub position: GeoPoint,
}

/// One ground-truth object's position in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtPoint {
    pub frame_id: u64,
    pub object: usize,
    pub position: GeoPoint,
}

/// Aggregate tracking scores.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrackingScore {
    /// Times a matched object's track id differed from its last matched id.
    pub id_switches: usize,
    /// Times an object was matched, then present but unmatched, then
    /// matched again.
    pub fragmentations: usize,
    pub matched: usize,
    pub gt_total: usize,
    pub recall: f64,
}

/// Per-frame greedy nearest matching of track points to ground-truth
/// objects within `max_dist_m`, then identity bookkeeping per object.
pub fn tracking_score(preds: &[TrackPoint], gts: &[GtPoint], max_dist_m: f64) -> TrackingScore {
    let preds_by_frame = group_by_frame(preds, |p| p.frame_id);
    let gts_by_frame = group_by_frame(gts, |g| g.frame_id);

    // object → (frame → matched track id or None).
    let mut timeline: BTreeMap<usize, BTreeMap<u64, Option<u64>>> = BTreeMap::new();
    let mut matched = 0usize;
    for (frame, fg) in &gts_by_frame {
        for g in fg {
            timeline.entry(g.object).or_default().insert(*frame, None);
        }
        let empty = Vec::new();
        let fp = preds_by_frame.get(frame).unwrap_or(&empty);
        let mut pairs: Vec<(f64, u64, usize)> = Vec::new();
        for p in fp {
            for g in fg.iter() {
                if let Some(d) = ground_distance(p.position, g.position) {
                    if d <= max_dist_m {
                        pairs.push((d, p.track_id, g.object));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_tracks = std::collections::BTreeSet::new();
        let mut used_objects = std::collections::BTreeSet::new();
        for (_, tid, obj) in pairs {
            if used_tracks.insert(tid) && used_objects.insert(obj) {
                timeline.get_mut(&obj).unwrap().insert(*frame, Some(tid));
                matched += 1;
            }
        }
    }

    let mut id_switches = 0usize;
    let mut fragmentations = 0usize;
    for frames in timeline.values() {
        let mut last_tid: Option<u64> = None;
        let mut in_gap = false;
        for tid in frames.values() {
            match tid {
                Some(tid) => {
                    if let Some(prev) = last_tid {
                        if prev != *tid {
                            id_switches += 1;
                        }
                        if in_gap {
                            fragmentations += 1;
                        }
                    }
                    last_tid = Some(*tid);
                    in_gap = false;
                }
                None => {
                    if last_tid.is_some() {
                        in_gap = true;
                    }
                }
            }
        }
    }

    let gt_total = gts.len();
    TrackingScore {
        id_switches,
        fragmentations,
        matched,
        gt_total,
        recall: if gt_total == 0 { 1.0 } else { matched as f64 / gt_total as f64 },
    }
}

fn ground_distance(a: GeoPoint, b: GeoPoint) -> Option<f64> {
    geodesy::gps_to_offset(a, b).ok().map(|o| o.norm_m())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(frame_id: u64, x: f64, y: f64, s: f64, class_id: u32, score: f64) -> PredBox {
        PredBox { frame_id, x1: x, y1: y, x2: x + s, y2: y + s, class_id, score }
    }

    fn g(frame_id: u64, x: f64, y: f64, s: f64, class_id: u32, object: usize) -> GtBox {
        GtBox { frame_id, x1: x, y1: y, x2: x + s, y2: y + s, class_id, object }
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let gts: Vec<GtBox> = (0..5).map(|f| g(f, 10.0 * f as f64, 20.0, 30.0, 0, 0)).collect();
        let preds: Vec<PredBox> =
            gts.iter().map(|gt| p(gt.frame_id, gt.x1, gt.y1, 30.0, 0, 0.9)).collect();
        let score = detection_prf(&preds, &gts, 0.5);
        assert_eq!(score.true_positives, 5);
        assert_eq!(score.precision, 1.0);
        assert_eq!(score.recall, 1.0);
        assert_eq!(score.f1, 1.0);
        assert_eq!(average_precision(&preds, &gts, 0.5), 1.0);
        assert_eq!(mean_recall(&preds, &gts, 100), 1.0);
    }

    #[test]
    fn class_confusion_is_not_a_match() {
        let gts = vec![g(0, 0.0, 0.0, 20.0, 1, 0)];
        let preds = vec![p(0, 0.0, 0.0, 20.0, 2, 0.9)];
        let score = detection_prf(&preds, &gts, 0.5);
        assert_eq!(score.true_positives, 0);
        assert_eq!(score.false_positives, 1);
        assert_eq!(score.false_negatives, 1);
        assert_eq!(average_precision(&preds, &gts, 0.5), 0.0);
    }

    #[test]
    fn greedy_matching_prefers_the_higher_overlap() {
        let gts = vec![g(0, 0.0, 0.0, 20.0, 0, 0)];
        // Both predictions overlap the ground truth; the tight one must win.
        let preds = vec![p(0, 5.0, 5.0, 20.0, 0, 0.5), p(0, 1.0, 1.0, 20.0, 0, 0.4)];
        let matches = greedy_match_frame(&preds, &gts, 0.3);
        assert_eq!(matches, vec![(1, 0)]);
    }

    #[test]
    fn average_precision_penalizes_high_ranked_false_positives() {
        let gts = vec![g(0, 0.0, 0.0, 20.0, 0, 0)];
        // FP outranks the TP: precision at full recall is 1/2.
        let preds = vec![p(0, 500.0, 500.0, 20.0, 0, 0.9), p(0, 0.0, 0.0, 20.0, 0, 0.8)];
        let ap = average_precision(&preds, &gts, 0.5);
        assert!((ap - 0.5).abs() < 1e-12, "ap = {ap}");
        // TP outranks the FP: full precision at full recall.
        let preds = vec![p(0, 0.0, 0.0, 20.0, 0, 0.9), p(0, 500.0, 500.0, 20.0, 0, 0.8)];
        let ap = average_precision(&preds, &gts, 0.5);
        assert!((ap - 1.0).abs() < 1e-12, "ap = {ap}");
    }

    #[test]
    fn appending_low_score_false_positives_never_raises_ap() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let gts: Vec<GtBox> = (0..rng.gen_range(1..6))
                .map(|i| g(0, rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0), 40.0, 0, i))
                .collect();
            let mut preds: Vec<PredBox> = Vec::new();
            for gt in &gts {
                if rng.gen::<f64>() < 0.7 {
                    preds.push(p(
                        0,
                        gt.x1 + rng.gen_range(-3.0..3.0),
                        gt.y1,
                        40.0,
                        0,
                        rng.gen_range(0.5..1.0),
                    ));
                }
            }
            let base = average_precision(&preds, &gts, 0.5);
            for _ in 0..5 {
                preds.push(p(0, 2000.0, 2000.0, 40.0, 0, rng.gen_range(0.0..0.4)));
            }
            let with_fps = average_precision(&preds, &gts, 0.5);
            assert!(with_fps <= base + 1e-12, "{with_fps} > {base}");
        }
    }

    #[test]
    fn mean_recall_drops_for_loose_boxes_and_respects_top_k() {
        let gts = vec![g(0, 0.0, 0.0, 20.0, 0, 0)];
        // Nested box sharing a corner: IoU = 15.3²/20² ≈ 0.585, so it
        // counts at 0.50 and 0.55 only → recall 2/10 thresholds.
        let preds = vec![p(0, 0.0, 0.0, 15.3, 0, 0.9)];
        let ar = mean_recall(&preds, &gts, 100);
        assert!((ar - 0.2).abs() < 1e-9, "ar = {ar}");

        // The true box is ranked below a decoy and top_k = 1 cuts it off.
        let preds =
            vec![p(0, 900.0, 900.0, 20.0, 0, 0.95), p(0, 0.0, 0.0, 20.0, 0, 0.9)];
        assert_eq!(mean_recall(&preds, &gts, 1), 0.0);
        assert_eq!(mean_recall(&preds, &gts, 2), 1.0);
    }

    fn gp(frame_id: u64, object: usize, east: f64) -> GtPoint {
        let position = crate::geodesy::offset_to_gps(
            GeoPoint::new(46.9, 7.4),
            crate::geodesy::NorthOffset::new(east, 0.0),
        )
        .unwrap();
        GtPoint { frame_id, object, position }
    }

    fn tp_(frame_id: u64, track_id: u64, east: f64) -> TrackPoint {
        let position = crate::geodesy::offset_to_gps(
            GeoPoint::new(46.9, 7.4),
            crate::geodesy::NorthOffset::new(east, 0.0),
        )
        .unwrap();
        TrackPoint { frame_id, track_id, position }
    }

    #[test]
    fn identity_switches_and_fragmentations_are_counted_per_object() {
        let mut gts = Vec::new();
        let mut preds = Vec::new();
        for f in 0..10u64 {
            gts.push(gp(f, 0, 0.0));
            match f {
                0..=3 => preds.push(tp_(f, 1, 0.4)),
                4..=5 => {} // present but unmatched: a gap
                _ => preds.push(tp_(f, 1, 0.2)),
            }
        }
        let score = tracking_score(&preds, &gts, 5.0);
        assert_eq!(score.id_switches, 0);
        assert_eq!(score.fragmentations, 1);
        assert_eq!(score.matched, 8);

        // Same shape but the track id changes across the gap: one switch,
        // and the gap still counts as a fragmentation.
        let preds: Vec<TrackPoint> = (0..10u64)
            .filter(|f| !(4..=5).contains(f))
            .map(|f| tp_(f, if f < 4 { 1 } else { 2 }, 0.3))
            .collect();
        let score = tracking_score(&preds, &gts, 5.0);
        assert_eq!(score.id_switches, 1);
        assert_eq!(score.fragmentations, 1);
    }

    #[test]
    fn tracking_match_respects_the_distance_gate_and_prefers_nearest() {
        let gts = vec![gp(0, 0, 0.0), gp(0, 1, 30.0)];
        let preds = vec![tp_(0, 7, 1.0), tp_(0, 8, 29.0), tp_(0, 9, 300.0)];
        let score = tracking_score(&preds, &gts, 5.0);
        assert_eq!(score.matched, 2);
        assert_eq!(score.recall, 1.0);

        // Two tracks near one object: only one claims it.
        let gts = vec![gp(0, 0, 0.0)];
        let preds = vec![tp_(0, 7, 0.5), tp_(0, 8, 0.6)];
        let score = tracking_score(&preds, &gts, 5.0);
        assert_eq!(score.matched, 1);
    }

    #[test]
    fn empty_inputs_take_their_conventions() {
        let score = detection_prf(&[], &[], 0.5);
        assert_eq!(score.precision, 1.0);
        assert_eq!(score.recall, 1.0);
        assert_eq!(average_precision(&[], &[], 0.5), 1.0);
        assert_eq!(average_precision(&[p(0, 0.0, 0.0, 10.0, 0, 0.5)], &[], 0.5), 0.0);
        let ts = tracking_score(&[], &[], 5.0);
        assert_eq!(ts.recall, 1.0);
        assert_eq!(ts.id_switches, 0);
    }
}
