use deva_fuse::association::match_segments;
use deva_fuse::consensus::{
    build_support_graph, consensus_trace, solve_consensus, ConsensusConfig, Proposal, Verdict,
};
use deva_fuse::propagation::IdentityPropagator;
use deva_fuse::{render_non_overlapping, BinaryMask, Segment, SegmentId, Segmentation};
use proptest::prelude::*;

const W: u32 = 12;

fn rect((x, y, w, h): (i64, i64, i64, i64)) -> BinaryMask {
    BinaryMask::rect(W, W, x, y, x + w, y + h)
}

fn arb_rect() -> impl Strategy<Value = (i64, i64, i64, i64)> {
    (0i64..8, 0i64..8, 2i64..6, 2i64..6)
}

fn arb_pool() -> impl Strategy<Value = Vec<Proposal>> {
    prop::collection::vec((0usize..3, arb_rect()), 1..=10).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(k, (offset, r))| Proposal {
                mask: rect(r),
                source_frame_offset: offset,
                source_id: SegmentId(k as u32 + 1),
                class_label: None,
                confidence: None,
            })
            .collect()
    })
}

/// Enumerates every indicator; returns the best objective and the preferred
/// optimal indicator (lexicographically greatest in priority order).
fn brute_force(pool: &[Proposal], alpha: f64, theta: f64) -> (f64, Vec<bool>) {
    let n = pool.len();
    let mut iou = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && pool[i].source_frame_offset != pool[j].source_frame_offset {
                iou[i][j] = pool[i].mask.iou(&pool[j].mask).unwrap();
            }
        }
    }
    let weight: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| iou[i][j] > theta)
                .map(|j| iou[i][j])
                .sum::<f64>()
                - alpha
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        (
            pool[i].source_frame_offset,
            std::cmp::Reverse(pool[i].mask.area()),
            i,
        )
    });

    let mut feasible = Vec::new();
    for bits in 0u32..(1 << n) {
        let on = |i: usize| bits >> i & 1 == 1;
        let ok = (0..n).all(|i| (0..n).all(|j| !(on(i) && on(j) && iou[i][j] > theta)));
        if ok {
            let obj: f64 = (0..n).filter(|&i| on(i)).map(|i| weight[i]).sum();
            feasible.push((obj, (0..n).map(on).collect::<Vec<bool>>()));
        }
    }
    let best = feasible
        .iter()
        .map(|f| f.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let preferred = feasible
        .into_iter()
        .filter(|f| f.0 >= best - 1e-9)
        .map(|f| f.1)
        .max_by_key(|v| order.iter().map(|&i| v[i]).collect::<Vec<bool>>())
        .unwrap();
    (best, preferred)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn solver_matches_enumeration(pool in arb_pool(), alpha in prop::sample::select(vec![0.0, 0.25, 0.5, 1.0]), theta in prop::sample::select(vec![0.3, 0.5, 0.7])) {
        let graph = build_support_graph(&pool, alpha, theta).unwrap();
        let sel = solve_consensus(&graph, 24);
        let (best, indicator) = brute_force(&pool, alpha, theta);
        prop_assert!(sel.exact);
        prop_assert!((sel.objective - best).abs() < 1e-9, "{} vs {}", sel.objective, best);
        prop_assert_eq!(sel.indicator, indicator);
    }

    #[test]
    fn isolated_proposals_are_never_selected(pool in arb_pool(), alpha in 0.01f64..1.0) {
        let graph = build_support_graph(&pool, alpha, 0.5).unwrap();
        let sel = solve_consensus(&graph, 24);
        for i in 0..pool.len() {
            if graph.adjacency[i].is_empty() {
                prop_assert!(!sel.indicator[i]);
            }
        }
    }
}

fn arb_segmentation() -> impl Strategy<Value = Segmentation> {
    prop::collection::vec(arb_rect(), 0..6).prop_map(|rects| {
        let segs = rects
            .into_iter()
            .enumerate()
            .map(|(k, r)| Segment::new(SegmentId(k as u32 + 1), rect(r)))
            .collect();
        render_non_overlapping(0, W, W, segs).unwrap()
    })
}

proptest! {
    #[test]
    fn greedy_matching_is_optimal(r in arb_segmentation(), c in arb_segmentation()) {
        let assoc = match_segments(&r, &c).unwrap();
        let weights: Vec<Vec<f64>> = r.segments().iter()
            .map(|a| c.segments().iter().map(|b| {
                let v = a.mask.iou(&b.mask).unwrap();
                if v > 0.5 { v } else { 0.0 }
            }).collect())
            .collect();
        let best: f64 = deva_fuse::assignment::max_weight_assignment(&weights)
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| weights[i][j]))
            .sum();
        prop_assert!((assoc.total_iou() - best).abs() < 1e-12);
        for (i, _) in r.segments().iter().enumerate() {
            prop_assert!(weights[i].iter().filter(|&&w| w > 0.5).count() <= 1);
        }
    }
}

#[test]
fn inspect_style_verdicts() {
    let sq = BinaryMask::rect(16, 16, 2, 2, 8, 8);
    let clip: Vec<Segmentation> = (0..3)
        .map(|t| {
            Segmentation::new(t, 16, 16, vec![Segment::new(SegmentId(1), sq.clone())]).unwrap()
        })
        .collect();
    let trace = consensus_trace(
        &clip,
        &IdentityPropagator::new(),
        &ConsensusConfig::default(),
    )
    .unwrap();
    assert_eq!(
        trace.verdicts(),
        vec![Verdict::Select, Verdict::Reject, Verdict::Reject]
    );
    assert!((trace.selection.objective - 1.5).abs() < 1e-12);
    let single = consensus_trace(
        &clip[..1],
        &IdentityPropagator::new(),
        &ConsensusConfig::default(),
    )
    .unwrap();
    assert_eq!(single.verdicts(), vec![Verdict::Passthrough]);
    assert_eq!(single.output, clip[0]);
}
