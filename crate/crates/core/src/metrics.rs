//! Video segmentation metrics: PQ, VPQ over k-frame windows, STQ and OWTA.
//!
//! Conventions:
//! - A segment's class is its `class_label`; unlabeled segments form their own class.
//! - A tube is identified by `(class, segment id)`. A track whose label changes
//!   therefore splits into separate tubes. Segments of stuff classes are
//!   merged per frame into one tube per class.
//! - VPQ^k slides a k-frame window with stride 1, computes class-averaged PQ on
//!   each window's tubes, and averages over windows that contain any segment.
//!   With k = 1 this is exactly the frame-averaged PQ.
//! - SQ averages per-class IoU over classes present in prediction or ground
//!   truth; unlabeled background is not a class.
//! - OWTA averages DetRe and AssA over localization thresholds 0.05..=0.95 and
//!   takes their geometric mean. Unmatched predictions do not lower DetRe.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::mask::{ClassId, SegmentId, Segmentation};

/// Match threshold for PQ/VPQ.
pub const MATCH_IOU: f64 = 0.5;

/// Per-frame segmentations whose ids are track ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedVideo {
    frames: Vec<Segmentation>,
}

impl TrackedVideo {
    pub fn new(frames: Vec<Segmentation>) -> Result<Self> {
        if let Some(first) = frames.first() {
            let dims = (first.width(), first.height());
            for f in &frames {
                if (f.width(), f.height()) != dims {
                    return Err(Error::DimensionMismatch {
                        left: dims,
                        right: (f.width(), f.height()),
                    });
                }
            }
        }
        Ok(TrackedVideo { frames })
    }

    pub fn frames(&self) -> &[Segmentation] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn track_ids(&self) -> BTreeSet<SegmentId> {
        self.frames
            .iter()
            .flat_map(|f| f.segments().iter().map(|s| s.id))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Classes whose segments are merged per frame before matching.
    #[serde(default)]
    pub stuff_classes: BTreeSet<ClassId>,
}

/// VPQ window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Window {
    Frames(usize),
    Whole,
}

impl Window {
    /// The windows averaged by the summary VPQ.
    pub const STANDARD: [Window; 7] = [
        Window::Frames(1),
        Window::Frames(2),
        Window::Frames(4),
        Window::Frames(6),
        Window::Frames(8),
        Window::Frames(10),
        Window::Whole,
    ];
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Frames(k) => write!(f, "{k}"),
            Window::Whole => write!(f, "inf"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "∞" | "Inf" | "INF" => Ok(Window::Whole),
            other => match other.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Window::Frames(k)),
                _ => Err(Error::Config(format!("invalid VPQ window `{other}`"))),
            },
        }
    }
}

type TubeKey = (Option<ClassId>, Option<SegmentId>);

fn tube_key(class: Option<ClassId>, id: SegmentId, opts: &MetricOptions) -> TubeKey {
    match class {
        Some(c) if opts.stuff_classes.contains(&c) => (Some(c), None),
        _ => (class, Some(id)),
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct ClassStat {
    iou_sum: f64,
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn class_average(stats: &BTreeMap<Option<ClassId>, ClassStat>) -> Option<f64> {
    let values: Vec<f64> = stats
        .values()
        .filter(|s| s.tp + s.fp + s.fn_ > 0)
        .map(|s| s.iou_sum / (s.tp as f64 + 0.5 * s.fp as f64 + 0.5 * s.fn_ as f64))
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Panoptic quality of one frame, or `None` when neither side has a segment.
pub fn pq(pred: &Segmentation, gt: &Segmentation) -> Result<Option<f64>> {
    pq_with(pred, gt, &MetricOptions::default())
}

pub fn pq_with(
    pred: &Segmentation,
    gt: &Segmentation,
    opts: &MetricOptions,
) -> Result<Option<f64>> {
    let merge = |seg: &Segmentation| -> Result<Vec<(TubeKey, crate::mask::BinaryMask)>> {
        let mut out: Vec<(TubeKey, crate::mask::BinaryMask)> = Vec::new();
        for s in seg.segments() {
            if s.mask.is_empty() {
                continue;
            }
            let key = tube_key(s.class_label, s.id, opts);
            match out.iter_mut().find(|(k, _)| *k == key) {
                Some((_, m)) => *m = m.union(&s.mask)?,
                None => out.push((key, s.mask.clone())),
            }
        }
        Ok(out)
    };
    let p = merge(pred)?;
    let g = merge(gt)?;
    let mut stats: BTreeMap<Option<ClassId>, ClassStat> = BTreeMap::new();
    let mut p_matched = vec![false; p.len()];
    let mut g_matched = vec![false; g.len()];
    for (gi, (gk, gm)) in g.iter().enumerate() {
        for (pi, (pk, pm)) in p.iter().enumerate() {
            if pk.0 != gk.0 || p_matched[pi] {
                continue;
            }
            let iou = pm.iou(gm)?;
            if iou > MATCH_IOU {
                p_matched[pi] = true;
                g_matched[gi] = true;
                let st = stats.entry(gk.0).or_default();
                st.tp += 1;
                st.iou_sum += iou;
                break;
            }
        }
    }
    for (pi, (pk, _)) in p.iter().enumerate() {
        if !p_matched[pi] {
            stats.entry(pk.0).or_default().fp += 1;
        }
    }
    for (gi, (gk, _)) in g.iter().enumerate() {
        if !g_matched[gi] {
            stats.entry(gk.0).or_default().fn_ += 1;
        }
    }
    Ok(class_average(&stats))
}

/// Pixel-overlap bookkeeping for one frame, in terms of dense tube indices.
struct FrameOverlap {
    inter: HashMap<(usize, usize), u64>,
    pred_area: HashMap<usize, u64>,
    gt_area: HashMap<usize, u64>,
}

struct TubeIndex {
    pred_keys: Vec<TubeKey>,
    gt_keys: Vec<TubeKey>,
    frames: Vec<FrameOverlap>,
}

fn key_map(seg: &Segmentation, opts: &MetricOptions, keys: &mut Vec<TubeKey>) -> Vec<usize> {
    let mut map = vec![usize::MAX; (seg.width() * seg.height()) as usize];
    for s in seg.segments() {
        let key = tube_key(s.class_label, s.id, opts);
        let idx = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
            keys.push(key);
            keys.len() - 1
        });
        for (a, b) in s.mask.intervals() {
            map[a as usize..b as usize].fill(idx);
        }
    }
    map
}

fn check_videos(pred: &TrackedVideo, gt: &TrackedVideo) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Input(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    for (p, g) in pred.frames().iter().zip(gt.frames()) {
        if (p.width(), p.height()) != (g.width(), g.height()) {
            return Err(Error::DimensionMismatch {
                left: (p.width(), p.height()),
                right: (g.width(), g.height()),
            });
        }
    }
    Ok(())
}

impl TubeIndex {
    fn build(pred: &TrackedVideo, gt: &TrackedVideo, opts: &MetricOptions) -> Result<Self> {
        check_videos(pred, gt)?;
        let mut pred_keys = Vec::new();
        let mut gt_keys = Vec::new();
        let mut frames = Vec::with_capacity(pred.len());
        for (p, g) in pred.frames().iter().zip(gt.frames()) {
            let pm = key_map(p, opts, &mut pred_keys);
            let gm = key_map(g, opts, &mut gt_keys);
            let mut fo = FrameOverlap {
                inter: HashMap::new(),
                pred_area: HashMap::new(),
                gt_area: HashMap::new(),
            };
            for (&a, &b) in pm.iter().zip(&gm) {
                if a != usize::MAX {
                    *fo.pred_area.entry(a).or_default() += 1;
                }
                if b != usize::MAX {
                    *fo.gt_area.entry(b).or_default() += 1;
                }
                if a != usize::MAX && b != usize::MAX {
                    *fo.inter.entry((a, b)).or_default() += 1;
                }
            }
            frames.push(fo);
        }
        Ok(TubeIndex {
            pred_keys,
            gt_keys,
            frames,
        })
    }

    fn window_pq(&self, start: usize, end: usize) -> Option<f64> {
        let mut inter: HashMap<(usize, usize), u64> = HashMap::new();
        let mut pa: BTreeMap<usize, u64> = BTreeMap::new();
        let mut ga: BTreeMap<usize, u64> = BTreeMap::new();
        for f in &self.frames[start..end] {
            for (&k, &v) in &f.inter {
                *inter.entry(k).or_default() += v;
            }
            for (&k, &v) in &f.pred_area {
                *pa.entry(k).or_default() += v;
            }
            for (&k, &v) in &f.gt_area {
                *ga.entry(k).or_default() += v;
            }
        }
        let mut stats: BTreeMap<Option<ClassId>, ClassStat> = BTreeMap::new();
        let mut p_matched = BTreeSet::new();
        let mut g_matched = BTreeSet::new();
        let mut pairs: Vec<_> = inter.into_iter().collect();
        pairs.sort_unstable_by_key(|&(k, _)| k);
        for ((p, g), i) in pairs {
            if self.pred_keys[p].0 != self.gt_keys[g].0 {
                continue;
            }
            let union = pa[&p] + ga[&g] - i;
            let iou = i as f64 / union as f64;
            if iou > MATCH_IOU && !p_matched.contains(&p) && !g_matched.contains(&g) {
                p_matched.insert(p);
                g_matched.insert(g);
                let st = stats.entry(self.gt_keys[g].0).or_default();
                st.tp += 1;
                st.iou_sum += iou;
            }
        }
        for &p in pa.keys() {
            if !p_matched.contains(&p) {
                stats.entry(self.pred_keys[p].0).or_default().fp += 1;
            }
        }
        for &g in ga.keys() {
            if !g_matched.contains(&g) {
                stats.entry(self.gt_keys[g].0).or_default().fn_ += 1;
            }
        }
        class_average(&stats)
    }

    fn vpq(&self, window: Window) -> Option<f64> {
        let t = self.frames.len();
        if t == 0 {
            return None;
        }
        let k = match window {
            Window::Frames(k) => k.min(t),
            Window::Whole => t,
        };
        let values: Vec<f64> = (0..=t - k)
            .filter_map(|s| self.window_pq(s, s + k))
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

pub fn vpq_k(pred: &TrackedVideo, gt: &TrackedVideo, window: Window) -> Result<Option<f64>> {
    Ok(TubeIndex::build(pred, gt, &MetricOptions::default())?.vpq(window))
}

/// Half the whole-video VPQ plus half the mean of VPQ over 1, 2, 4, 6, 8 and 10 frames.
pub fn vpq_bar(vpq: &[(Window, Option<f64>)]) -> Option<f64> {
    let get = |w: Window| vpq.iter().find(|(k, _)| *k == w).and_then(|(_, v)| *v);
    let whole = get(Window::Whole)?;
    let mut short = Vec::new();
    for w in &Window::STANDARD[..6] {
        short.push(get(*w)?);
    }
    Some(0.5 * whole + 0.5 * short.iter().sum::<f64>() / short.len() as f64)
}

pub fn geometric_mean(a: f64, b: f64) -> f64 {
    (a * b).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stq {
    pub stq: f64,
    pub aq: f64,
    pub sq: f64,
}

/// Segmentation and tracking quality over the whole video.
pub fn stq(pred: &TrackedVideo, gt: &TrackedVideo) -> Result<Stq> {
    stq_with(pred, gt, &MetricOptions::default())
}

pub fn stq_with(pred: &TrackedVideo, gt: &TrackedVideo, opts: &MetricOptions) -> Result<Stq> {
    check_videos(pred, gt)?;
    // semantic confusion over labeled pixels
    let mut tp: BTreeMap<ClassId, u64> = BTreeMap::new();
    let mut pred_px: BTreeMap<ClassId, u64> = BTreeMap::new();
    let mut gt_px: BTreeMap<ClassId, u64> = BTreeMap::new();
    // association over thing tracks
    let mut tpa: HashMap<(TubeKey, TubeKey), u64> = HashMap::new();
    let mut p_size: HashMap<TubeKey, u64> = HashMap::new();
    let mut g_size: BTreeMap<TubeKey, u64> = BTreeMap::new();

    for (p, g) in pred.frames().iter().zip(gt.frames()) {
        let n = (p.width() * p.height()) as usize;
        let mut pc: Vec<Option<(ClassId, TubeKey)>> = vec![None; n];
        let mut gc: Vec<Option<(ClassId, TubeKey)>> = vec![None; n];
        let mut pt: Vec<Option<TubeKey>> = vec![None; n];
        let mut gtk: Vec<Option<TubeKey>> = vec![None; n];
        for (seg, cls, trk) in [(p, &mut pc, &mut pt), (g, &mut gc, &mut gtk)] {
            for s in seg.segments() {
                let key = tube_key(s.class_label, s.id, opts);
                let is_thing = key.1.is_some();
                for (a, b) in s.mask.intervals() {
                    for px in a as usize..b as usize {
                        if let Some(c) = s.class_label {
                            cls[px] = Some((c, key));
                        }
                        if is_thing {
                            trk[px] = Some(key);
                        }
                    }
                }
            }
        }
        for px in 0..n {
            let a = pc[px].map(|x| x.0);
            let b = gc[px].map(|x| x.0);
            if let Some(c) = a {
                *pred_px.entry(c).or_default() += 1;
            }
            if let Some(c) = b {
                *gt_px.entry(c).or_default() += 1;
            }
            if let (Some(x), Some(y)) = (a, b) {
                if x == y {
                    *tp.entry(x).or_default() += 1;
                }
            }
            if let Some(k) = pt[px] {
                *p_size.entry(k).or_default() += 1;
            }
            if let Some(k) = gtk[px] {
                *g_size.entry(k).or_default() += 1;
            }
            if let (Some(x), Some(y)) = (pt[px], gtk[px]) {
                *tpa.entry((x, y)).or_default() += 1;
            }
        }
    }

    let classes: BTreeSet<ClassId> = pred_px.keys().chain(gt_px.keys()).copied().collect();
    let sq = if classes.is_empty() {
        1.0
    } else {
        classes
            .iter()
            .map(|c| {
                let t = *tp.get(c).unwrap_or(&0) as f64;
                let u =
                    *pred_px.get(c).unwrap_or(&0) as f64 + *gt_px.get(c).unwrap_or(&0) as f64 - t;
                t / u
            })
            .sum::<f64>()
            / classes.len() as f64
    };

    let aq = if g_size.is_empty() {
        if p_size.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        let mut per_gt: BTreeMap<TubeKey, f64> = BTreeMap::new();
        let mut entries: Vec<_> = tpa.into_iter().collect();
        entries.sort_unstable_by_key(|&(k, _)| k);
        for ((pk, gk), t) in entries {
            let t = t as f64;
            let iou = t / (p_size[&pk] as f64 + g_size[&gk] as f64 - t);
            *per_gt.entry(gk).or_default() += t * iou;
        }
        g_size
            .iter()
            .map(|(gk, &size)| per_gt.get(gk).copied().unwrap_or(0.0) / size as f64)
            .sum::<f64>()
            / g_size.len() as f64
    };

    Ok(Stq {
        stq: geometric_mean(aq, sq),
        aq,
        sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Owta {
    pub owta: f64,
    pub det_re: f64,
    pub ass_a: f64,
}

/// Localization thresholds 0.05, 0.10, ..., 0.95.
pub fn owta_thresholds() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

/// Open-world tracking accuracy at mask level. Class labels are ignored.
pub fn owta(pred: &TrackedVideo, gt: &TrackedVideo) -> Result<Owta> {
    check_videos(pred, gt)?;
    let mut gt_ids: Vec<SegmentId> = Vec::new();
    let mut pr_ids: Vec<SegmentId> = Vec::new();
    let index = |ids: &mut Vec<SegmentId>, id: SegmentId| -> usize {
        ids.iter().position(|&x| x == id).unwrap_or_else(|| {
            ids.push(id);
            ids.len() - 1
        })
    };
    // per frame: (gt indices, pred indices, similarity matrix)
    let mut per_frame = Vec::with_capacity(gt.len());
    for (p, g) in pred.frames().iter().zip(gt.frames()) {
        let gs: Vec<_> = g.segments().iter().filter(|s| !s.mask.is_empty()).collect();
        let ps: Vec<_> = p.segments().iter().filter(|s| !s.mask.is_empty()).collect();
        let gi: Vec<usize> = gs.iter().map(|s| index(&mut gt_ids, s.id)).collect();
        let pi: Vec<usize> = ps.iter().map(|s| index(&mut pr_ids, s.id)).collect();
        let mut sim = vec![vec![0.0; ps.len()]; gs.len()];
        for (a, gsg) in gs.iter().enumerate() {
            for (b, psg) in ps.iter().enumerate() {
                sim[a][b] = gsg.mask.iou(&psg.mask)?;
            }
        }
        per_frame.push((gi, pi, sim));
    }
    let (ng, np) = (gt_ids.len(), pr_ids.len());
    let mut potential = vec![vec![0.0; np]; ng];
    let mut gt_count = vec![0.0; ng];
    let mut pr_count = vec![0.0; np];
    for (gi, pi, sim) in &per_frame {
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..pi.len())
            .map(|b| sim.iter().map(|r| r[b]).sum())
            .collect();
        for (a, &g) in gi.iter().enumerate() {
            for (b, &p) in pi.iter().enumerate() {
                let denom = row_sum[a] + col_sum[b] - sim[a][b];
                if denom > 0.0 {
                    potential[g][p] += sim[a][b] / denom;
                }
            }
        }
        for &g in gi {
            gt_count[g] += 1.0;
        }
        for &p in pi {
            pr_count[p] += 1.0;
        }
    }
    let global: Vec<Vec<f64>> = (0..ng)
        .map(|g| {
            (0..np)
                .map(|p| {
                    let d = gt_count[g] + pr_count[p] - potential[g][p];
                    if d > 0.0 {
                        potential[g][p] / d
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let alphas = owta_thresholds();
    let mut tp = vec![0.0; alphas.len()];
    let mut fn_ = vec![0.0; alphas.len()];
    let mut matches = vec![vec![vec![0.0; np]; ng]; alphas.len()];
    for (gi, pi, sim) in &per_frame {
        if gi.is_empty() {
            continue;
        }
        let score: Vec<Vec<f64>> = gi
            .iter()
            .enumerate()
            .map(|(a, &g)| {
                pi.iter()
                    .enumerate()
                    .map(|(b, &p)| global[g][p] * sim[a][b])
                    .collect()
            })
            .collect();
        let assigned = if pi.is_empty() {
            vec![None; gi.len()]
        } else {
            max_weight_assignment(&score)
        };
        for (k, &alpha) in alphas.iter().enumerate() {
            let mut hits = 0.0;
            for (a, col) in assigned.iter().enumerate() {
                if let Some(b) = *col {
                    if score[a][b] > 0.0 && sim[a][b] >= alpha - 1e-10 {
                        hits += 1.0;
                        matches[k][gi[a]][pi[b]] += 1.0;
                    }
                }
            }
            tp[k] += hits;
            fn_[k] += gi.len() as f64 - hits;
        }
    }
    let mut det_re = 0.0;
    let mut ass_a = 0.0;
    for k in 0..alphas.len() {
        det_re += tp[k] / (tp[k] + fn_[k]).max(1.0);
        let mut acc = 0.0;
        for g in 0..ng {
            for p in 0..np {
                let m = matches[k][g][p];
                if m > 0.0 {
                    acc += m * m / (gt_count[g] + pr_count[p] - m);
                }
            }
        }
        ass_a += acc / tp[k].max(1.0);
    }
    det_re /= alphas.len() as f64;
    ass_a /= alphas.len() as f64;
    Ok(Owta {
        owta: geometric_mean(det_re, ass_a),
        det_re,
        ass_a,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpqEntry {
    pub k: String,
    pub value: Option<f64>,
}

/// All metrics for one video (or a mean over videos). Values lie in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pq: Option<f64>,
    pub vpq: Vec<VpqEntry>,
    pub vpq_bar: Option<f64>,
    pub stq: f64,
    pub aq: f64,
    pub sq: f64,
    pub owta: f64,
    pub det_re: f64,
    pub ass_a: f64,
}

impl MetricReport {
    pub fn vpq(&self, window: Window) -> Option<f64> {
        let key = window.to_string();
        self.vpq.iter().find(|e| e.k == key).and_then(|e| e.value)
    }

    /// Field-wise mean; absent values are skipped.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let first = reports.first()?;
        let avg_opt = |f: &dyn Fn(&MetricReport) -> Option<f64>| {
            let v: Vec<f64> = reports.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let avg = |f: &dyn Fn(&MetricReport) -> f64| {
            reports.iter().map(f).sum::<f64>() / reports.len() as f64
        };
        let vpq: Vec<VpqEntry> = first
            .vpq
            .iter()
            .map(|e| VpqEntry {
                k: e.k.clone(),
                value: avg_opt(&|r: &MetricReport| {
                    r.vpq.iter().find(|x| x.k == e.k).and_then(|x| x.value)
                }),
            })
            .collect();
        Some(MetricReport {
            pq: avg_opt(&|r| r.pq),
            // recomputed from the averaged windows so the row stays consistent
            vpq_bar: vpq_bar(
                &vpq.iter()
                    .filter_map(|e| Some((e.k.parse().ok()?, e.value)))
                    .collect::<Vec<_>>(),
            ),
            stq: avg(&|r| r.stq),
            aq: avg(&|r| r.aq),
            sq: avg(&|r| r.sq),
            owta: avg(&|r| r.owta),
            det_re: avg(&|r| r.det_re),
            ass_a: avg(&|r| r.ass_a),
            vpq,
        })
    }
}

/// Computes every metric for one video.
pub fn evaluate(
    pred: &TrackedVideo,
    gt: &TrackedVideo,
    windows: &[Window],
    opts: &MetricOptions,
) -> Result<MetricReport> {
    let index = TubeIndex::build(pred, gt, opts)?;
    let vpq: Vec<(Window, Option<f64>)> = windows.iter().map(|&w| (w, index.vpq(w))).collect();
    let frame_pq: Vec<f64> = pred
        .frames()
        .iter()
        .zip(gt.frames())
        .map(|(p, g)| pq_with(p, g, opts))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let pq = (!frame_pq.is_empty()).then(|| frame_pq.iter().sum::<f64>() / frame_pq.len() as f64);
    let s = stq_with(pred, gt, opts)?;
    let o = owta(pred, gt)?;
    Ok(MetricReport {
        pq,
        vpq_bar: vpq_bar(&vpq),
        vpq: vpq
            .into_iter()
            .map(|(w, value)| VpqEntry {
                k: w.to_string(),
                value,
            })
            .collect(),
        stq: s.stq,
        aq: s.aq,
        sq: s.sq,
        owta: o.owta,
        det_re: o.det_re,
        ass_a: o.ass_a,
    })
}
