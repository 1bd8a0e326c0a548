//! Run-length encoded binary masks and per-frame segmentations.
//!
//! Masks use uncompressed, row-major runs: `runs[0]` counts background
//! pixels, `runs[1]` foreground, and so on, alternating. The first run may be
//! zero (mask starting with foreground); no other run is zero.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a segment within a frame. For tracked outputs this is the track id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u32);

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Semantic category of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            runs: vec![width * height],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            runs: vec![0, width * height],
        }
    }

    /// Builds a mask from raw runs, validating the sum and canonicalizing
    /// interior zero-length runs away.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::InvalidRle(format!(
                "runs sum to {total}, expected {width}x{height}={expected}"
            )));
        }
        let mut intervals = Vec::new();
        let mut pos = 0u32;
        for (i, &len) in runs.iter().enumerate() {
            if i % 2 == 1 && len > 0 {
                intervals.push((pos, pos + len));
            }
            pos += len;
        }
        Ok(Self::from_intervals(width, height, &intervals))
    }

    /// Builds a mask from sorted, non-overlapping foreground intervals `[start, end)`
    /// over the row-major pixel index. Adjacent intervals are coalesced.
    pub fn from_intervals(width: u32, height: u32, intervals: &[(u32, u32)]) -> Self {
        let total = width * height;
        let mut runs = Vec::with_capacity(intervals.len() * 2 + 1);
        let mut cursor = 0u32;
        let mut open: Option<(u32, u32)> = None;
        let flush = |runs: &mut Vec<u32>, cursor: &mut u32, (s, e): (u32, u32)| {
            runs.push(s - *cursor);
            runs.push(e - s);
            *cursor = e;
        };
        for &(s, e) in intervals {
            if e <= s {
                continue;
            }
            debug_assert!(e <= total);
            match open {
                Some((os, oe)) if s <= oe => open = Some((os, oe.max(e))),
                Some(prev) => {
                    flush(&mut runs, &mut cursor, prev);
                    open = Some((s, e));
                }
                None => open = Some((s, e)),
            }
        }
        if let Some(prev) = open {
            flush(&mut runs, &mut cursor, prev);
        }
        if cursor < total || runs.is_empty() {
            runs.push(total - cursor);
        }
        BinaryMask {
            width,
            height,
            runs,
        }
    }

    /// Encodes a row-major bitmap of length `width * height`.
    pub fn from_bitmap(width: u32, height: u32, bits: &[bool]) -> Result<Self> {
        if bits.len() != (width * height) as usize {
            return Err(Error::InvalidRle(format!(
                "bitmap has {} pixels, expected {}",
                bits.len(),
                width * height
            )));
        }
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        Ok(BinaryMask {
            width,
            height,
            runs,
        })
    }

    /// Axis-aligned rectangle `[x0, x1) x [y0, y1)`, clipped to the canvas.
    pub fn rect(width: u32, height: u32, x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        let cx0 = x0.clamp(0, width as i64) as u32;
        let cx1 = x1.clamp(0, width as i64) as u32;
        let cy0 = y0.clamp(0, height as i64) as u32;
        let cy1 = y1.clamp(0, height as i64) as u32;
        if cx0 >= cx1 || cy0 >= cy1 {
            return Self::empty(width, height);
        }
        let intervals: Vec<_> = (cy0..cy1)
            .map(|y| (y * width + cx0, y * width + cx1))
            .collect();
        Self::from_intervals(width, height, &intervals)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut bits = vec![false; (self.width * self.height) as usize];
        for (s, e) in self.intervals() {
            bits[s as usize..e as usize].fill(true);
        }
        bits
    }

    /// Foreground intervals `[start, end)` in row-major pixel index order.
    pub fn intervals(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let mut pos = 0u32;
        self.runs.iter().enumerate().filter_map(move |(i, &len)| {
            let start = pos;
            pos += len;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        let idx = y * self.width + x;
        self.intervals()
            .take_while(|&(s, _)| s <= idx)
            .any(|(s, e)| idx >= s && idx < e)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left: (self.width, self.height),
                right: (other.width, other.height),
            });
        }
        Ok(())
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        self.check_dims(other)?;
        let mut total = 0u64;
        merge_walk(self, other, |s, e, a, b| {
            if a && b {
                total += (e - s) as u64;
            }
        });
        Ok(total)
    }

    /// Intersection-over-union. Two empty masks have IoU 0.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(0.0);
        }
        Ok(inter as f64 / union as f64)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && b)
    }

    /// Pixels of `self` not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && !b)
    }

    fn combine(&self, other: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.check_dims(other)?;
        let mut intervals = Vec::new();
        merge_walk(self, other, |s, e, a, b| {
            if op(a, b) {
                intervals.push((s, e));
            }
        });
        Ok(BinaryMask::from_intervals(
            self.width,
            self.height,
            &intervals,
        ))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> Result<bool> {
        Ok(self.intersection_area(other)? == self.area())
    }

    /// Shifts the mask by an integer offset; pixels leaving the canvas are lost.
    pub fn translate(&self, dx: i64, dy: i64) -> BinaryMask {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut intervals = Vec::new();
        for (s, e) in self.intervals() {
            let (mut s, e) = (s as i64, e as i64);
            while s < e {
                let y = s / w;
                let row_end = ((y + 1) * w).min(e);
                let ny = y + dy;
                if (0..h).contains(&ny) {
                    let x0 = (s - y * w + dx).clamp(0, w);
                    let x1 = (row_end - y * w + dx).clamp(0, w);
                    if x0 < x1 {
                        intervals.push(((ny * w + x0) as u32, (ny * w + x1) as u32));
                    }
                }
                s = row_end;
            }
        }
        intervals.sort_unstable();
        BinaryMask::from_intervals(self.width, self.height, &intervals)
    }

    /// Bounding box `(x0, y0, x1, y1)` with exclusive upper corner; `None` when empty.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let w = self.width;
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for (s, e) in self.intervals() {
            let (ys, ye) = (s / w, (e - 1) / w);
            let (xs, xe) = if ys == ye {
                (s % w, (e - 1) % w + 1)
            } else {
                (0, w)
            };
            bounds = Some(match bounds {
                None => (xs, ys, xe, ye + 1),
                Some((a, b, c, d)) => (a.min(xs), b.min(ys), c.max(xe), d.max(ye + 1)),
            });
        }
        bounds
    }
}

/// Walks the union of run boundaries of two same-sized masks, calling `f`
/// with each maximal span `[s, e)` and the foreground state of both masks on it.
fn merge_walk(a: &BinaryMask, b: &BinaryMask, mut f: impl FnMut(u32, u32, bool, bool)) {
    let total = a.width * a.height;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut end_a, mut end_b) = (a.runs[0], b.runs[0]);
    let mut pos = 0u32;
    while pos < total {
        while end_a <= pos && ia + 1 < a.runs.len() {
            ia += 1;
            end_a += a.runs[ia];
        }
        while end_b <= pos && ib + 1 < b.runs.len() {
            ib += 1;
            end_b += b.runs[ib];
        }
        let next = end_a.min(end_b);
        f(pos, next, ia % 2 == 1, ib % 2 == 1);
        pos = next;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub mask: BinaryMask,
    pub class_label: Option<ClassId>,
    pub confidence: Option<f64>,
}

impl Segment {
    pub fn new(id: SegmentId, mask: BinaryMask) -> Self {
        Segment {
            id,
            mask,
            class_label: None,
            confidence: None,
        }
    }

    pub fn with_class(mut self, class: ClassId) -> Self {
        self.class_label = Some(class);
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }
}

/// One frame's set of mutually disjoint segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    frame: usize,
    width: u32,
    height: u32,
    segments: Vec<Segment>,
}

impl Segmentation {
    /// Validates dimensions, id uniqueness and pairwise disjointness.
    pub fn new(frame: usize, width: u32, height: u32, segments: Vec<Segment>) -> Result<Self> {
        let mut ids = HashSet::new();
        for s in &segments {
            if s.mask.width() != width || s.mask.height() != height {
                return Err(Error::DimensionMismatch {
                    left: (width, height),
                    right: (s.mask.width(), s.mask.height()),
                });
            }
            if !ids.insert(s.id) {
                return Err(Error::DuplicateSegmentId(s.id.0));
            }
            if let Some(c) = s.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidConfidence(c));
                }
            }
        }
        let mut owner = vec![u32::MAX; (width * height) as usize];
        for (k, s) in segments.iter().enumerate() {
            for (a, b) in s.mask.intervals() {
                for p in &mut owner[a as usize..b as usize] {
                    if *p != u32::MAX {
                        return Err(Error::Overlap(segments[*p as usize].id.0, s.id.0));
                    }
                    *p = k as u32;
                }
            }
        }
        Ok(Segmentation {
            frame,
            width,
            height,
            segments,
        })
    }

    pub fn empty(frame: usize, width: u32, height: u32) -> Self {
        Segmentation {
            frame,
            width,
            height,
            segments: Vec::new(),
        }
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn get(&self, id: SegmentId) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Same segments, relabelled to another frame index.
    pub fn with_frame(mut self, frame: usize) -> Self {
        self.frame = frame;
        self
    }

    /// Per-pixel id map, 0 for background.
    pub fn id_map(&self) -> Vec<u32> {
        let mut map = vec![0u32; (self.width * self.height) as usize];
        for s in &self.segments {
            for (a, b) in s.mask.intervals() {
                map[a as usize..b as usize].fill(s.id.0);
            }
        }
        map
    }

    /// Inverse of [`Segmentation::id_map`]; segments are ordered by id.
    pub fn from_id_map(frame: usize, width: u32, height: u32, map: &[u32]) -> Result<Self> {
        if map.len() != (width * height) as usize {
            return Err(Error::InvalidRle(format!(
                "id map has {} pixels, expected {}",
                map.len(),
                width * height
            )));
        }
        let mut per_id: std::collections::BTreeMap<u32, Vec<(u32, u32)>> = Default::default();
        let mut start = 0usize;
        while start < map.len() {
            let id = map[start];
            let mut end = start + 1;
            while end < map.len() && map[end] == id {
                end += 1;
            }
            if id != 0 {
                per_id
                    .entry(id)
                    .or_default()
                    .push((start as u32, end as u32));
            }
            start = end;
        }
        let segments = per_id
            .into_iter()
            .map(|(id, iv)| {
                Segment::new(
                    SegmentId(id),
                    BinaryMask::from_intervals(width, height, &iv),
                )
            })
            .collect();
        Ok(Segmentation {
            frame,
            width,
            height,
            segments,
        })
    }
}

/// Paints segments in descending order of area so smaller segments win
/// contested pixels. Equal areas paint the higher id first, so the lower id
/// wins. Segments erased completely are dropped; survivors keep input order.
pub fn render_non_overlapping(
    frame: usize,
    width: u32,
    height: u32,
    segments: Vec<Segment>,
) -> Result<Segmentation> {
    let mut ids = HashSet::new();
    for s in &segments {
        if s.mask.width() != width || s.mask.height() != height {
            return Err(Error::DimensionMismatch {
                left: (width, height),
                right: (s.mask.width(), s.mask.height()),
            });
        }
        if !ids.insert(s.id) {
            return Err(Error::DuplicateSegmentId(s.id.0));
        }
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    let areas: Vec<u64> = segments.iter().map(|s| s.mask.area()).collect();
    order.sort_by(|&a, &b| {
        areas[b]
            .cmp(&areas[a])
            .then(segments[b].id.cmp(&segments[a].id))
    });
    let mut canvas = vec![u32::MAX; (width * height) as usize];
    for &k in &order {
        for (a, b) in segments[k].mask.intervals() {
            canvas[a as usize..b as usize].fill(k as u32);
        }
    }
    let mut intervals: Vec<Vec<(u32, u32)>> = vec![Vec::new(); segments.len()];
    let mut start = 0usize;
    while start < canvas.len() {
        let owner = canvas[start];
        let mut end = start + 1;
        while end < canvas.len() && canvas[end] == owner {
            end += 1;
        }
        if owner != u32::MAX {
            intervals[owner as usize].push((start as u32, end as u32));
        }
        start = end;
    }
    let segments = segments
        .into_iter()
        .zip(intervals)
        .filter(|(_, iv)| !iv.is_empty())
        .map(|(mut s, iv)| {
            s.mask = BinaryMask::from_intervals(width, height, &iv);
            s
        })
        .collect();
    Ok(Segmentation {
        frame,
        width,
        height,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(id: u32, mask: BinaryMask) -> Segment {
        Segment::new(SegmentId(id), mask)
    }

    #[test]
    fn area_examples() {
        assert_eq!(BinaryMask::full(4, 4).area(), 16);
        assert_eq!(BinaryMask::empty(4, 4).area(), 0);
        assert_eq!(BinaryMask::rect(10, 10, 0, 0, 5, 10).area(), 50);
    }

    #[test]
    fn iou_examples() {
        let a = BinaryMask::rect(20, 10, 0, 0, 10, 10);
        assert_eq!(a.iou(&a).unwrap(), 1.0);
        let far = BinaryMask::rect(20, 10, 10, 0, 20, 10);
        assert_eq!(a.iou(&far).unwrap(), 0.0);
        let shifted = BinaryMask::rect(20, 10, 5, 0, 15, 10);
        assert!((a.iou(&shifted).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let e = BinaryMask::empty(4, 4);
        assert_eq!(e.iou(&e).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = BinaryMask::empty(4, 4);
        let b = BinaryMask::empty(4, 5);
        assert!(matches!(a.iou(&b), Err(Error::DimensionMismatch { .. })));
        assert!(a.union(&b).is_err());
        assert!(a.intersection(&b).is_err());
    }

    #[test]
    fn union_intersection_examples() {
        let m = BinaryMask::rect(10, 10, 2, 2, 6, 7);
        let e = BinaryMask::empty(10, 10);
        assert_eq!(m.union(&e).unwrap(), m);
        assert_eq!(m.intersection(&m).unwrap(), m);
        let a = BinaryMask::rect(10, 10, 0, 0, 5, 10);
        let b = BinaryMask::rect(10, 10, 5, 0, 10, 10);
        assert_eq!(a.union(&b).unwrap().area(), 100);
        assert_eq!(a.union(&b).unwrap(), BinaryMask::full(10, 10));
    }

    #[test]
    fn from_runs_canonicalizes() {
        let m = BinaryMask::from_runs(3, 2, vec![1, 2, 0, 1, 2]).unwrap();
        assert_eq!(m.runs(), &[1, 3, 2]);
        assert!(BinaryMask::from_runs(3, 2, vec![1, 2]).is_err());
        let starts_fg = BinaryMask::from_runs(2, 2, vec![0, 4]).unwrap();
        assert_eq!(starts_fg, BinaryMask::full(2, 2));
    }

    #[test]
    fn translate_clips_at_border() {
        let m = BinaryMask::rect(10, 10, 0, 0, 4, 4);
        assert_eq!(m.translate(6, 0), BinaryMask::rect(10, 10, 6, 0, 10, 4));
        assert_eq!(m.translate(8, 0).area(), 8);
        assert_eq!(m.translate(0, -3).area(), 4);
        assert!(m.translate(20, 0).is_empty());
    }

    #[test]
    fn bbox_of_rect() {
        let m = BinaryMask::rect(10, 10, 2, 3, 7, 9);
        assert_eq!(m.bbox(), Some((2, 3, 7, 9)));
        assert_eq!(BinaryMask::empty(3, 3).bbox(), None);
    }

    #[test]
    fn render_disjoint_unchanged() {
        let a = BinaryMask::rect(10, 10, 0, 0, 3, 3);
        let b = BinaryMask::rect(10, 10, 5, 5, 8, 8);
        let s =
            render_non_overlapping(0, 10, 10, vec![seg(1, a.clone()), seg(2, b.clone())]).unwrap();
        assert_eq!(s.segments()[0].mask, a);
        assert_eq!(s.segments()[1].mask, b);
    }

    #[test]
    fn render_small_wins_over_big() {
        let big = BinaryMask::rect(10, 10, 0, 0, 8, 8);
        let small = BinaryMask::rect(10, 10, 3, 3, 5, 5);
        let s = render_non_overlapping(0, 10, 10, vec![seg(1, big), seg(2, small)]).unwrap();
        assert_eq!(s.get(SegmentId(2)).unwrap().mask.area(), 4);
        assert_eq!(s.get(SegmentId(1)).unwrap().mask.area(), 60);
    }

    #[test]
    fn render_tie_lower_id_wins() {
        let a = BinaryMask::rect(10, 10, 0, 0, 4, 4);
        let b = BinaryMask::rect(10, 10, 2, 0, 6, 4);
        let s =
            render_non_overlapping(0, 10, 10, vec![seg(7, a.clone()), seg(3, b.clone())]).unwrap();
        // id 3 painted last, keeps all 16 pixels; id 7 keeps the 8 it does not share
        assert_eq!(s.get(SegmentId(3)).unwrap().mask, b);
        assert_eq!(
            s.get(SegmentId(7)).unwrap().mask,
            BinaryMask::rect(10, 10, 0, 0, 2, 4)
        );
    }

    #[test]
    fn render_drops_erased_segments() {
        let a = BinaryMask::rect(10, 10, 0, 0, 4, 4);
        let s = render_non_overlapping(0, 10, 10, vec![seg(2, a.clone()), seg(1, a)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.segments()[0].id, SegmentId(1));
    }

    #[test]
    fn segmentation_rejects_overlap_and_duplicates() {
        let a = BinaryMask::rect(10, 10, 0, 0, 4, 4);
        let b = BinaryMask::rect(10, 10, 3, 3, 6, 6);
        assert!(matches!(
            Segmentation::new(0, 10, 10, vec![seg(1, a.clone()), seg(2, b)]),
            Err(Error::Overlap(1, 2))
        ));
        let c = BinaryMask::rect(10, 10, 6, 6, 8, 8);
        assert!(matches!(
            Segmentation::new(0, 10, 10, vec![seg(1, a), seg(1, c)]),
            Err(Error::DuplicateSegmentId(1))
        ));
    }

    #[test]
    fn id_map_round_trip() {
        let a = BinaryMask::rect(6, 5, 0, 0, 3, 2);
        let b = BinaryMask::rect(6, 5, 3, 2, 6, 5);
        let s = Segmentation::new(4, 6, 5, vec![seg(9, b), seg(2, a)]).unwrap();
        let back = Segmentation::from_id_map(4, 6, 5, &s.id_map()).unwrap();
        assert_eq!(back.get(SegmentId(2)), s.get(SegmentId(2)));
        assert_eq!(back.get(SegmentId(9)), s.get(SegmentId(9)));
    }

    fn bitmap_strategy() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            (
                Just(w),
                Just(h),
                prop::collection::vec(any::<bool>(), (w * h) as usize),
            )
        })
    }

    fn pair_strategy() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1u32..10, 1u32..10).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b)| {
                    (
                        BinaryMask::from_bitmap(w, h, &a).unwrap(),
                        BinaryMask::from_bitmap(w, h, &b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn rle_round_trip((w, h, bits) in bitmap_strategy()) {
            let m = BinaryMask::from_bitmap(w, h, &bits).unwrap();
            prop_assert_eq!(m.to_bitmap(), bits.clone());
            prop_assert_eq!(m.runs().iter().map(|&r| r as u64).sum::<u64>(), (w * h) as u64);
            prop_assert!(m.runs().iter().skip(1).all(|&r| r > 0));
            prop_assert_eq!(m.area(), bits.iter().filter(|&&b| b).count() as u64);
        }
    }

    proptest! {
        #[test]
        fn set_algebra_laws((a, b) in pair_strategy()) {
            let u = a.union(&b).unwrap();
            let i = a.intersection(&b).unwrap();
            prop_assert_eq!(u.area() + i.area(), a.area() + b.area());
            let ba = a.to_bitmap();
            let bb = b.to_bitmap();
            let expect_u: Vec<bool> = ba.iter().zip(&bb).map(|(x, y)| *x || *y).collect();
            let expect_i: Vec<bool> = ba.iter().zip(&bb).map(|(x, y)| *x && *y).collect();
            prop_assert_eq!(u.to_bitmap(), expect_u);
            prop_assert_eq!(i.to_bitmap(), expect_i);
            let iou = a.iou(&b).unwrap();
            prop_assert_eq!(iou, b.iou(&a).unwrap());
            prop_assert!((0.0..=1.0).contains(&iou));
            if !a.is_empty() {
                prop_assert_eq!(a.iou(&a).unwrap(), 1.0);
            }
        }

        #[test]
        fn render_output_disjoint_subsets(
            rects in prop::collection::vec((0i64..12, 0i64..12, 1i64..8, 1i64..8), 1..7)
        ) {
            let segs: Vec<Segment> = rects
                .iter()
                .enumerate()
                .map(|(k, &(x, y, w, h))| seg(k as u32 + 1, BinaryMask::rect(16, 16, x, y, x + w, y + h)))
                .collect();
            let out = render_non_overlapping(0, 16, 16, segs.clone()).unwrap();
            prop_assert!(Segmentation::new(0, 16, 16, out.segments().to_vec()).is_ok());
            for s in out.segments() {
                let input = segs.iter().find(|x| x.id == s.id).unwrap();
                prop_assert!(s.mask.is_subset_of(&input.mask).unwrap());
            }
        }
    }
}
