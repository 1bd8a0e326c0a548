//! Independent reference implementations used by the acceptance checks.
//! Everything here works on raw pixels and never calls the library's own
//! mask algebra or solvers.

use deva_fuse::consensus::Proposal;
use deva_fuse::BinaryMask;

pub fn pixel_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (pa, pb) = (a.to_bitmap(), b.to_bitmap());
    let inter = pa.iter().zip(&pb).filter(|(x, y)| **x && **y).count();
    let union = pa.iter().zip(&pb).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Best objective by enumerating every subset, plus the optimal indicator the
/// tie rule prefers: lexicographically greatest when proposals are read in
/// priority order (lower frame offset, then larger area, then lower index).
pub fn brute_force_consensus(pool: &[Proposal], alpha: f64, theta: f64) -> (f64, Vec<bool>) {
    let n = pool.len();
    assert!(n <= 20);
    let mut iou = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if pool[i].source_frame_offset != pool[j].source_frame_offset {
                let v = pixel_iou(&pool[i].mask, &pool[j].mask);
                iou[i][j] = v;
                iou[j][i] = v;
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
    let conflicts: Vec<u32> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| iou[i][j] > theta)
                .fold(0, |m, j| m | 1 << j)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let area = pool[i].mask.to_bitmap().iter().filter(|&&b| b).count();
        (pool[i].source_frame_offset, std::cmp::Reverse(area), i)
    });

    let mut best = f64::NEG_INFINITY;
    let mut objectives = vec![f64::NAN; 1 << n];
    for bits in 0u32..(1 << n) {
        if (0..n).any(|i| bits >> i & 1 == 1 && bits & conflicts[i] != 0) {
            continue;
        }
        let obj: f64 = (0..n)
            .filter(|&i| bits >> i & 1 == 1)
            .map(|i| weight[i])
            .sum();
        objectives[bits as usize] = obj;
        best = best.max(obj);
    }
    let rank = |bits: u32| {
        order
            .iter()
            .map(|&i| bits >> i & 1 == 1)
            .collect::<Vec<bool>>()
    };
    let chosen = (0u32..(1 << n))
        .filter(|&b| objectives[b as usize] >= best - 1e-9)
        .max_by_key(|&b| rank(b))
        .expect("the empty set is feasible");
    (best, (0..n).map(|i| chosen >> i & 1 == 1).collect())
}

/// Maximum-weight assignment by the Hungarian method on the negated,
/// zero-padded square matrix. Returns the column for each row, if any.
pub fn hungarian(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };
    // potentials and matching, 1-based with 0 as the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for (j, &i) in p.iter().enumerate().skip(1) {
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Number of pixels claimed by more than one segment.
pub fn overlap_violations(masks: &[&BinaryMask]) -> usize {
    let Some(first) = masks.first() else {
        return 0;
    };
    let mut owners = vec![0u8; first.to_bitmap().len()];
    for m in masks {
        for (o, px) in owners.iter_mut().zip(m.to_bitmap()) {
            if px {
                *o = o.saturating_add(1);
            }
        }
    }
    owners.iter().filter(|&&o| o > 1).count()
}
