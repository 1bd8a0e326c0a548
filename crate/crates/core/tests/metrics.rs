use std::collections::HashMap;

use deva_fuse::metrics::{
    evaluate, owta, pq, stq, vpq_bar, vpq_k, MetricOptions, TrackedVideo, Window,
};
use deva_fuse::{BinaryMask, ClassId, Segment, SegmentId, Segmentation};
use proptest::prelude::*;

/// Segmentation on a `w`x1 strip from per-pixel ids (0 = background), all class 1.
fn strip(frame: usize, ids: &[u32]) -> Segmentation {
    let map: Vec<u32> = ids.to_vec();
    let seg = Segmentation::from_id_map(frame, ids.len() as u32, 1, &map).unwrap();
    let segments = seg
        .into_segments()
        .into_iter()
        .map(|s| s.with_class(ClassId(1)))
        .collect();
    Segmentation::new(frame, ids.len() as u32, 1, segments).unwrap()
}

fn video(frames: &[&[u32]]) -> TrackedVideo {
    TrackedVideo::new(
        frames
            .iter()
            .enumerate()
            .map(|(t, f)| strip(t, f))
            .collect(),
    )
    .unwrap()
}

#[test]
fn vpq_id_switch_four_pixels() {
    // two same-class objects on a 4-pixel strip; the prediction swaps ids at frame 1
    let gt = video(&[&[1, 1, 2, 2], &[1, 1, 2, 2]]);
    let pred = video(&[&[7, 7, 8, 8], &[8, 8, 7, 7]]);
    let v1 = vpq_k(&pred, &gt, Window::Frames(1)).unwrap().unwrap();
    let v2 = vpq_k(&pred, &gt, Window::Frames(2)).unwrap().unwrap();
    assert!((v1 - 1.0).abs() < 1e-9);
    // every tube IoU is 2/6, so nothing matches
    assert!(v2.abs() < 1e-9);
    let vinf = vpq_k(&pred, &gt, Window::Whole).unwrap().unwrap();
    assert!(vinf.abs() < 1e-9);
}

#[test]
fn pq_true_positive_and_false_positive() {
    let mask = |x0, x1| BinaryMask::rect(10, 1, x0, 0, x1, 1);
    let gt = Segmentation::new(
        0,
        10,
        1,
        vec![Segment::new(SegmentId(1), mask(0, 5)).with_class(ClassId(3))],
    )
    .unwrap();
    let pred = Segmentation::new(
        0,
        10,
        1,
        vec![
            Segment::new(SegmentId(1), mask(0, 4)).with_class(ClassId(3)),
            Segment::new(SegmentId(2), mask(7, 9)).with_class(ClassId(3)),
        ],
    )
    .unwrap();
    let v = pq(&pred, &gt).unwrap().unwrap();
    assert!((v - 0.8 / 1.5).abs() < 1e-9, "{v}");
}

#[test]
fn pq_edge_cases() {
    let gt = strip(0, &[1, 1, 0]);
    assert_eq!(pq(&gt, &gt).unwrap(), Some(1.0));
    assert_eq!(pq(&strip(0, &[0, 0, 0]), &gt).unwrap(), Some(0.0));
    assert_eq!(
        pq(&strip(0, &[0, 0, 0]), &strip(0, &[0, 0, 0])).unwrap(),
        None
    );
}

/// STEP association quality straight from the definition, pixel by pixel.
fn aq_oracle(pred: &TrackedVideo, gt: &TrackedVideo) -> f64 {
    let mut inter: HashMap<(u32, u32), f64> = HashMap::new();
    let mut gsize: HashMap<u32, f64> = HashMap::new();
    let mut psize: HashMap<u32, f64> = HashMap::new();
    for (p, g) in pred.frames().iter().zip(gt.frames()) {
        for (a, b) in p.id_map().into_iter().zip(g.id_map()) {
            if b != 0 {
                *gsize.entry(b).or_default() += 1.0;
            }
            if a != 0 {
                *psize.entry(a).or_default() += 1.0;
            }
            if a != 0 && b != 0 {
                *inter.entry((a, b)).or_default() += 1.0;
            }
        }
    }
    let mut total = 0.0;
    for (&g, &gs) in &gsize {
        let mut acc = 0.0;
        for (&(a, b), &tpa) in &inter {
            if b == g {
                let iou = tpa / (psize[&a] + gs - tpa);
                acc += tpa * iou;
            }
        }
        total += acc / gs;
    }
    total / gsize.len() as f64
}

#[test]
fn stq_single_object_id_switch() {
    let gt = video(&[&[1, 1, 0, 0], &[1, 1, 0, 0]]);
    let pred = video(&[&[4, 4, 0, 0], &[5, 5, 0, 0]]);
    let s = stq(&pred, &gt).unwrap();
    let oracle = aq_oracle(&pred, &gt);
    assert!((oracle - 0.5).abs() < 1e-12);
    assert!((s.aq - oracle).abs() < 1e-9);
    assert!((s.sq - 1.0).abs() < 1e-9);
    assert!((s.stq - 0.5f64.sqrt()).abs() < 1e-9);
}

#[test]
fn stq_partial_overlap_matches_oracle() {
    let gt = video(&[
        &[1, 1, 1, 2, 2, 0],
        &[1, 1, 2, 2, 2, 0],
        &[0, 1, 1, 2, 2, 2],
    ]);
    let pred = video(&[
        &[3, 3, 4, 4, 4, 4],
        &[3, 3, 3, 4, 4, 0],
        &[3, 3, 3, 9, 9, 9],
    ]);
    let s = stq(&pred, &gt).unwrap();
    assert!((s.aq - aq_oracle(&pred, &gt)).abs() < 1e-9);
}

#[test]
fn owta_half_the_tracks_missing() {
    let gt = video(&[&[1, 1, 0, 2, 2], &[1, 1, 0, 2, 2]]);
    let pred = video(&[&[6, 6, 0, 0, 0], &[6, 6, 0, 0, 0]]);
    let o = owta(&pred, &gt).unwrap();
    assert!((o.det_re - 0.5).abs() < 1e-9);
    assert!((o.ass_a - 1.0).abs() < 1e-9);
    assert!((o.owta - 0.5f64.sqrt()).abs() < 1e-9);
}

#[test]
fn owta_ignores_unmatched_predictions() {
    let gt = video(&[&[1, 1, 0, 0, 0], &[1, 1, 0, 0, 0]]);
    let pred = video(&[&[6, 6, 0, 8, 8], &[6, 6, 0, 8, 8]]);
    let o = owta(&pred, &gt).unwrap();
    assert!((o.owta - 1.0).abs() < 1e-9);
}

#[test]
fn published_row_summary() {
    let vals = [35.4, 30.8, 28.5, 27.0, 25.9, 24.9];
    let mut entries: Vec<(Window, Option<f64>)> = [1, 2, 4, 6, 8, 10]
        .iter()
        .zip(vals)
        .map(|(&k, v)| (Window::Frames(k), Some(v / 100.0)))
        .collect();
    entries.push((Window::Whole, Some(0.217)));
    let bar = 100.0 * vpq_bar(&entries).unwrap();
    assert!((bar - 25.2).abs() <= 0.05, "{bar}");
    assert!((bar - 25.225).abs() < 1e-9);
}

#[test]
fn perfect_prediction_scores_one_everywhere() {
    let gt = video(&[&[1, 1, 0, 2], &[1, 0, 2, 2], &[0, 1, 1, 2]]);
    let pred = video(&[&[5, 5, 0, 3], &[5, 0, 3, 3], &[0, 5, 5, 3]]);
    let r = evaluate(&pred, &gt, &Window::STANDARD, &MetricOptions::default()).unwrap();
    for e in &r.vpq {
        assert_eq!(e.value, Some(1.0), "{}", e.k);
    }
    assert_eq!(r.vpq_bar, Some(1.0));
    for v in [r.stq, r.aq, r.sq, r.owta, r.det_re, r.ass_a] {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

fn arb_video(frames: usize, width: usize, ids: u32) -> impl Strategy<Value = Vec<Vec<u32>>> {
    prop::collection::vec(prop::collection::vec(0..=ids, width), frames)
}

fn from_maps(maps: &[Vec<u32>]) -> TrackedVideo {
    TrackedVideo::new(maps.iter().enumerate().map(|(t, m)| strip(t, m)).collect()).unwrap()
}

proptest! {
    #[test]
    fn vpq1_is_frame_averaged_pq(p in arb_video(5, 12, 4), g in arb_video(5, 12, 4)) {
        let (pred, gt) = (from_maps(&p), from_maps(&g));
        let per_frame: Vec<f64> = pred.frames().iter().zip(gt.frames())
            .filter_map(|(a, b)| pq(a, b).unwrap())
            .collect();
        let v1 = vpq_k(&pred, &gt, Window::Frames(1)).unwrap();
        if per_frame.is_empty() {
            prop_assert_eq!(v1, None);
        } else {
            let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
            prop_assert!((v1.unwrap() - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_ignore_track_relabeling(p in arb_video(4, 10, 3), g in arb_video(4, 10, 3), shift in 1u32..50) {
        let (pred, gt) = (from_maps(&p), from_maps(&g));
        let relabeled: Vec<Vec<u32>> = p.iter()
            .map(|f| f.iter().map(|&i| if i == 0 { 0 } else { 4 - i + shift }).collect())
            .collect();
        let a = evaluate(&pred, &gt, &Window::STANDARD, &MetricOptions::default()).unwrap();
        let b = evaluate(&from_maps(&relabeled), &gt, &Window::STANDARD, &MetricOptions::default()).unwrap();
        prop_assert_eq!(a.vpq.len(), b.vpq.len());
        for (x, y) in a.vpq.iter().zip(&b.vpq) {
            match (x.value, y.value) {
                (Some(u), Some(v)) => prop_assert!((u - v).abs() < 1e-12),
                (u, v) => prop_assert_eq!(u, v),
            }
        }
        prop_assert!((a.stq - b.stq).abs() < 1e-12);
        prop_assert!((a.owta - b.owta).abs() < 1e-12);
    }

    #[test]
    fn stq_association_matches_pixel_oracle(p in arb_video(3, 10, 3), g in arb_video(3, 10, 3)) {
        let (pred, gt) = (from_maps(&p), from_maps(&g));
        prop_assume!(g.iter().flatten().any(|&i| i != 0));
        let s = stq(&pred, &gt).unwrap();
        prop_assert!((s.aq - aq_oracle(&pred, &gt)).abs() < 1e-9);
    }

    #[test]
    fn perfect_tracks_score_equally_for_every_window(g in arb_video(6, 8, 3)) {
        let gt = from_maps(&g);
        let values: Vec<Option<f64>> = Window::STANDARD.iter()
            .map(|&w| vpq_k(&gt, &gt, w).unwrap())
            .collect();
        for v in values.into_iter().flatten() {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn id_switches_never_raise_vpq_with_longer_windows() {
    // a single object whose predicted id changes every frame
    let gt = video(&[&[1, 1], &[1, 1], &[1, 1], &[1, 1], &[1, 1], &[1, 1]]);
    let pred = video(&[&[1, 1], &[2, 2], &[3, 3], &[4, 4], &[5, 5], &[6, 6]]);
    let mut last = f64::INFINITY;
    for w in Window::STANDARD {
        let v = vpq_k(&pred, &gt, w).unwrap().unwrap();
        assert!(v <= last + 1e-12, "{w}");
        last = v;
    }
}
