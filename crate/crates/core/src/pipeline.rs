//! Orchestration: propagation between merges, periodic in-clip consensus,
//! merging, plus the tracking-by-detection baseline and the offline
//! soft-probability mode.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::association::{match_segments, merge, update_lifecycle, MergeOptions, TrackTable};
use crate::consensus::{consensus, ConsensusConfig};
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, Segment, SegmentId, Segmentation};
use crate::propagation::Propagator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Online,
    SemiOnline,
    OfflineSoft,
    MaskIouBaseline,
    ShortTrack,
    TrustImageSeg,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Online,
        Mode::SemiOnline,
        Mode::OfflineSoft,
        Mode::MaskIouBaseline,
        Mode::ShortTrack,
        Mode::TrustImageSeg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Online => "online",
            Mode::SemiOnline => "semi_online",
            Mode::OfflineSoft => "offline_soft",
            Mode::MaskIouBaseline => "mask_iou_baseline",
            Mode::ShortTrack => "short_track",
            Mode::TrustImageSeg => "trust_image_seg",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub clip_size: usize,
    pub merge_period: usize,
    pub alpha: f64,
    pub iou_threshold: f64,
    pub deletion_limit: u32,
    pub mode: Mode,
    pub spatial_alignment: bool,
    pub exact_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            clip_size: 3,
            merge_period: 5,
            alpha: 0.5,
            iou_threshold: 0.5,
            deletion_limit: 5,
            mode: Mode::SemiOnline,
            spatial_alignment: true,
            exact_cap: 24,
        }
    }
}

impl PipelineConfig {
    /// Defaults with a one-frame clip.
    pub fn online() -> Self {
        PipelineConfig {
            clip_size: 1,
            mode: Mode::Online,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_size == 0 {
            return Err(Error::Config("clip size must be at least 1".into()));
        }
        if self.merge_period == 0 {
            return Err(Error::Config("merge period must be at least 1".into()));
        }
        if self.deletion_limit == 0 {
            return Err(Error::Config("deletion limit must be at least 1".into()));
        }
        if self.mode == Mode::Online && self.clip_size != 1 {
            return Err(Error::Config(format!(
                "online mode needs clip size 1, got {}",
                self.clip_size
            )));
        }
        self.consensus().validate()
    }

    pub fn consensus(&self) -> ConsensusConfig {
        ConsensusConfig {
            alpha: self.alpha,
            theta: self.iou_threshold,
            exact_cap: self.exact_cap,
            spatial_alignment: self.spatial_alignment,
        }
    }
}

/// Supplies image segmentations per frame.
pub trait SegmentationSource {
    fn segment(&mut self, frame: usize) -> Result<Segmentation>;
}

/// A source backed by precomputed segmentations.
impl SegmentationSource for Vec<Segmentation> {
    fn segment(&mut self, frame: usize) -> Result<Segmentation> {
        self.get(frame).cloned().ok_or_else(|| Error::Source {
            frame,
            reason: "no segmentation for this frame".into(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub frames: Vec<Segmentation>,
    pub tracks: TrackTable,
    pub deleted: Vec<(usize, SegmentId)>,
    pub warnings: Vec<String>,
}

fn label_from_tracks(seg: Segmentation, tracks: &TrackTable) -> Result<Segmentation> {
    let (frame, w, h) = (seg.frame(), seg.width(), seg.height());
    let segments = seg
        .into_segments()
        .into_iter()
        .filter(|s| !s.mask.is_empty())
        .map(|mut s| {
            if let Some(t) = tracks.get(s.id) {
                s.class_label = t.label.or(s.class_label);
                s.confidence = t.confidence;
            }
            s
        })
        .collect();
    Segmentation::new(frame, w, h, segments)
}

/// Runs the decoupled pipeline over `num_frames` frames.
///
/// Merges happen at frames `0, merge_period, 2 * merge_period, ...`, each
/// using a consensus over the clip `t..min(t + n, num_frames)`. Other frames
/// come from propagation alone. Outputs are never revised.
pub fn run(
    num_frames: usize,
    source: &mut dyn SegmentationSource,
    propagator: &mut dyn Propagator,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    match cfg.mode {
        Mode::MaskIouBaseline => return run_baseline_mask_iou(num_frames, source),
        Mode::OfflineSoft => {
            return Err(Error::Config(
                "offline soft mode takes probability maps; use run_offline_soft".into(),
            ))
        }
        _ => {}
    }
    if num_frames == 0 {
        return Err(Error::Input("video has no frames".into()));
    }
    let ccfg = cfg.consensus();
    let merge_opts = MergeOptions {
        discard_unmatched_propagation: cfg.mode == Mode::TrustImageSeg,
    };
    let short_track = cfg.mode == Mode::ShortTrack;
    let mut tracks = TrackTable::new();
    let mut frames: Vec<Segmentation> = Vec::with_capacity(num_frames);
    let mut deleted_log = Vec::new();
    let mut warnings = Vec::new();
    let mut has_memory = false;
    let mut dims: Option<(u32, u32)> = None;

    for t in 0..num_frames {
        let mut output = None;
        if t % cfg.merge_period == 0 {
            let end = (t + cfg.clip_size).min(num_frames);
            let clip: Result<Vec<Segmentation>> = (t..end)
                .map(|f| source.segment(f).map(|s| s.with_frame(f)))
                .collect();
            match clip {
                Ok(clip) => {
                    dims = dims.or(Some((clip[0].width(), clip[0].height())));
                    let c = consensus(&clip, &*propagator, &ccfg)?;
                    let r = if has_memory {
                        label_from_tracks(propagator.propagate(t)?, &tracks)?
                    } else {
                        Segmentation::empty(t, c.width(), c.height())
                    };
                    let assoc = match_segments(&r, &c)?;
                    let deleted = update_lifecycle(&mut tracks, &r, &assoc, cfg.deletion_limit);
                    propagator.remove(&deleted);
                    deleted_log.extend(deleted.into_iter().map(|id| (t, id)));
                    let outcome = merge(&r, &c, &mut tracks, &assoc, merge_opts)?;
                    let old: Vec<SegmentId> = outcome.renamed.iter().map(|(o, _)| *o).collect();
                    propagator.remove(&old);
                    output = Some(outcome.output);
                }
                Err(e) => {
                    let msg =
                        format!("frame {t}: segmentation unavailable ({e}); propagating only");
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        let output = match output {
            Some(o) => o,
            None if has_memory => label_from_tracks(propagator.propagate(t)?, &tracks)?,
            None => {
                let (w, h) = dims.ok_or_else(|| Error::Source {
                    frame: t,
                    reason: "no segmentation available to initialize from".into(),
                })?;
                Segmentation::empty(t, w, h)
            }
        };
        if short_track {
            propagator.reset();
            let alive: Vec<SegmentId> = tracks
                .iter()
                .map(|tr| tr.id)
                .filter(|id| output.get(*id).is_none())
                .collect();
            for id in alive {
                tracks.remove(id);
                deleted_log.push((t, id));
            }
        }
        propagator.update(&output)?;
        has_memory = true;
        frames.push(output);
    }
    Ok(PipelineOutput {
        frames,
        tracks,
        deleted: deleted_log,
        warnings,
    })
}

/// Tracking by detection: every frame's segmentation is linked to the
/// previous output frame by IoU above 0.5. Unlinked segments start new tracks.
pub fn run_baseline_mask_iou(
    num_frames: usize,
    source: &mut dyn SegmentationSource,
) -> Result<PipelineOutput> {
    let mut tracks = TrackTable::new();
    let mut frames: Vec<Segmentation> = Vec::with_capacity(num_frames);
    let mut warnings = Vec::new();
    for t in 0..num_frames {
        let det = match source.segment(t) {
            Ok(d) => d.with_frame(t),
            Err(e) => {
                let msg =
                    format!("frame {t}: segmentation unavailable ({e}); emitting empty frame");
                warn!("{msg}");
                warnings.push(msg);
                let (w, h) = frames.last().map(|f| (f.width(), f.height())).ok_or(e)?;
                Segmentation::empty(t, w, h)
            }
        };
        let prev = frames
            .last()
            .cloned()
            .unwrap_or_else(|| Segmentation::empty(t, det.width(), det.height()));
        let assoc = match_segments(&prev, &det)?;
        let mut segments: Vec<Segment> = Vec::with_capacity(det.len());
        for (j, d) in det.segments().iter().enumerate() {
            let id = match assoc.pairs.iter().find(|p| p.1 == j) {
                Some(&(i, _, _)) => prev.segments()[i].id,
                None => tracks.spawn(t, d.class_label, d.confidence),
            };
            segments.push(Segment { id, ..d.clone() });
        }
        frames.push(Segmentation::new(t, det.width(), det.height(), segments)?);
    }
    Ok(PipelineOutput {
        frames,
        tracks,
        deleted: Vec::new(),
        warnings,
    })
}

/// One object's soft prediction on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftFrame {
    pub frame: usize,
    pub width: u32,
    pub height: u32,
    /// Row-major foreground probabilities in [0, 1].
    pub prob: Vec<f64>,
    /// Softmax logit; typically a model score in [0, 1].
    pub confidence: f64,
}

impl SoftFrame {
    pub fn new(
        frame: usize,
        width: u32,
        height: u32,
        prob: Vec<f64>,
        confidence: f64,
    ) -> Result<Self> {
        if prob.len() != (width * height) as usize {
            return Err(Error::Input(format!(
                "probability map has {} values for a {width}x{height} frame",
                prob.len()
            )));
        }
        if prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Input("probabilities must lie in [0, 1]".into()));
        }
        // confidences act as softmax logits, so only finiteness is required
        if !confidence.is_finite() {
            return Err(Error::InvalidConfidence(confidence));
        }
        Ok(SoftFrame {
            frame,
            width,
            height,
            prob,
            confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftConsensus {
    /// Position of the keyframe within the input list.
    pub keyframe: usize,
    pub weights: Vec<f64>,
    pub map: Vec<f64>,
}

/// Softmax-of-confidence weighted average of probability maps; the keyframe
/// is the most confident frame (first one on ties).
pub fn soft_consensus(frames: &[SoftFrame]) -> Result<SoftConsensus> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("soft consensus needs at least one frame".into()))?;
    for f in frames {
        if (f.width, f.height) != (first.width, first.height) {
            return Err(Error::DimensionMismatch {
                left: (first.width, first.height),
                right: (f.width, f.height),
            });
        }
    }
    let mut keyframe = 0;
    for (i, f) in frames.iter().enumerate() {
        if f.confidence > frames[keyframe].confidence {
            keyframe = i;
        }
    }
    let peak = frames[keyframe].confidence;
    let exps: Vec<f64> = frames.iter().map(|f| (f.confidence - peak).exp()).collect();
    let z: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let mut map = vec![0.0; first.prob.len()];
    for (f, w) in frames.iter().zip(&weights) {
        for (m, p) in map.iter_mut().zip(&f.prob) {
            *m += w * p;
        }
    }
    Ok(SoftConsensus {
        keyframe,
        weights,
        map,
    })
}

/// `count` frame indices spread evenly over `[0, len)`.
pub fn uniform_indices(len: usize, count: usize) -> Vec<usize> {
    if len == 0 || count == 0 {
        return Vec::new();
    }
    if count >= len {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..count)
        .map(|i| ((i as f64 + 0.5) * len as f64 / count as f64).floor() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Offline single-object mode: soft consensus over the sampled frames,
/// binarized (probability above 0.5) at the keyframe, then propagated forward
/// to the end and backward to the start. Memory is refreshed with the
/// propagator's own output every `memory_period` frames.
pub fn run_offline_soft(
    samples: &[SoftFrame],
    num_frames: usize,
    propagator: &mut dyn Propagator,
) -> Result<Vec<BinaryMask>> {
    const MEMORY_PERIOD: usize = 5;
    let cons = soft_consensus(samples)?;
    let key = &samples[cons.keyframe];
    let (w, h) = (key.width, key.height);
    if key.frame >= num_frames {
        return Err(Error::Input(format!(
            "keyframe {} outside a {num_frames}-frame video",
            key.frame
        )));
    }
    let bits: Vec<bool> = cons.map.iter().map(|&p| p > 0.5).collect();
    let seed = BinaryMask::from_bitmap(w, h, &bits)?;
    if seed.is_empty() {
        warn!("offline consensus is empty; output is empty on every frame");
        return Ok(vec![BinaryMask::empty(w, h); num_frames]);
    }
    let id = SegmentId(1);
    let mut out = vec![BinaryMask::empty(w, h); num_frames];
    out[key.frame] = seed.clone();
    let key_seg = Segmentation::new(key.frame, w, h, vec![Segment::new(id, seed)])?;
    let forward: Vec<usize> = (key.frame + 1..num_frames).collect();
    let backward: Vec<usize> = (0..key.frame).rev().collect();
    for order in [forward, backward] {
        propagator.reset();
        propagator.update(&key_seg)?;
        for (step, &t) in order.iter().enumerate() {
            let pred = propagator.propagate(t)?;
            let mask = pred
                .get(id)
                .map(|s| s.mask.clone())
                .unwrap_or_else(|| BinaryMask::empty(w, h));
            if (step + 1) % MEMORY_PERIOD == 0 {
                let seg = Segmentation::new(t, w, h, vec![Segment::new(id, mask.clone())])?;
                propagator.update(&seg)?;
            }
            out[t] = mask;
        }
    }
    Ok(out)
}

/// Per-pixel argmax over several objects' probability maps; pixels whose best
/// probability is not above 0.5 stay background. Ties go to the earlier object.
pub fn fuse_argmax(
    frame: usize,
    width: u32,
    height: u32,
    maps: &[(SegmentId, Vec<f64>)],
) -> Result<Segmentation> {
    let n = (width * height) as usize;
    if let Some((id, m)) = maps.iter().find(|(_, m)| m.len() != n) {
        return Err(Error::Input(format!(
            "probability map for {id} has {} values, expected {n}",
            m.len()
        )));
    }
    let mut owner = vec![None; n];
    for (px, slot) in owner.iter_mut().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (k, (_, m)) in maps.iter().enumerate() {
            if best.is_none_or(|(_, b)| m[px] > b) {
                best = Some((k, m[px]));
            }
        }
        if let Some((k, p)) = best {
            if p > 0.5 {
                *slot = Some(k);
            }
        }
    }
    let segments = maps
        .iter()
        .enumerate()
        .filter_map(|(k, (id, _))| {
            let bits: Vec<bool> = owner.iter().map(|o| *o == Some(k)).collect();
            let mask = BinaryMask::from_bitmap(width, height, &bits).ok()?;
            (!mask.is_empty()).then(|| Segment::new(*id, mask))
        })
        .collect();
    Segmentation::new(frame, width, height, segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::IdentityPropagator;

    fn sq(x: i64) -> BinaryMask {
        BinaryMask::rect(40, 10, x, 0, x + 8, 8)
    }

    fn det(t: usize, masks: &[BinaryMask]) -> Segmentation {
        Segmentation::new(
            t,
            40,
            10,
            masks
                .iter()
                .enumerate()
                .map(|(k, m)| Segment::new(SegmentId(k as u32 + 10), m.clone()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        assert!(PipelineConfig::online().validate().is_ok());
        let bad = PipelineConfig {
            mode: Mode::Online,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            merge_period: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            clip_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert_eq!(
            "mask-iou-baseline".parse::<Mode>().unwrap(),
            Mode::MaskIouBaseline
        );
    }

    #[test]
    fn single_frame_video_is_the_segmentation() {
        let mut src = vec![det(0, &[sq(0), sq(20)])];
        let mut p = IdentityPropagator::new();
        let out = run(1, &mut src, &mut p, &PipelineConfig::default()).unwrap();
        assert_eq!(out.frames.len(), 1);
        let masks: Vec<_> = out.frames[0]
            .segments()
            .iter()
            .map(|s| s.mask.clone())
            .collect();
        assert_eq!(masks, vec![sq(0), sq(20)]);
    }

    #[test]
    fn source_failure_on_merge_frame_propagates_only() {
        struct Flaky(Vec<Segmentation>);
        impl SegmentationSource for Flaky {
            fn segment(&mut self, frame: usize) -> Result<Segmentation> {
                if frame == 5 {
                    return Err(Error::Source {
                        frame,
                        reason: "boom".into(),
                    });
                }
                self.0.segment(frame)
            }
        }
        let frames: Vec<_> = (0..8).map(|t| det(t, &[sq(0)])).collect();
        let mut p = IdentityPropagator::new();
        let out = run(8, &mut Flaky(frames), &mut p, &PipelineConfig::default()).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.frames.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn baseline_breaks_tracks_on_gaps() {
        let mut frames: Vec<_> = (0..4).map(|t| det(t, &[sq(0)])).collect();
        frames[2] = det(2, &[]);
        let out = run_baseline_mask_iou(4, &mut frames).unwrap();
        let id0 = out.frames[0].segments()[0].id;
        assert_eq!(out.frames[1].segments()[0].id, id0);
        assert!(out.frames[2].is_empty());
        assert_ne!(out.frames[3].segments()[0].id, id0);
    }

    #[test]
    fn baseline_keeps_spurious_detections() {
        let mut frames: Vec<_> = (0..3).map(|t| det(t, &[sq(0)])).collect();
        frames[1] = det(1, &[sq(0), sq(30)]);
        let out = run_baseline_mask_iou(3, &mut frames).unwrap();
        assert_eq!(out.frames[1].len(), 2);
        assert_eq!(out.tracks.len(), 2);
    }

    fn soft(frame: usize, prob: Vec<f64>, c: f64) -> SoftFrame {
        let n = prob.len() as u32;
        SoftFrame::new(frame, n, 1, prob, c).unwrap()
    }

    #[test]
    fn soft_consensus_examples() {
        let a = soft(0, vec![1.0, 0.0], 0.4);
        let b = soft(1, vec![0.0, 1.0], 0.4);
        let c = soft_consensus(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.weights, vec![0.5, 0.5]);
        assert_eq!(c.map, vec![0.5, 0.5]);

        let a = soft(0, vec![0.2, 0.9], 0.0);
        let b = soft(1, vec![0.2, 0.9], 3f64.ln());
        let c = soft_consensus(&[a, b]).unwrap();
        assert!((c.weights[0] - 0.25).abs() < 1e-12);
        assert!((c.weights[1] - 0.75).abs() < 1e-12);
        assert_eq!(c.keyframe, 1);
        assert!(c
            .map
            .iter()
            .zip([0.2, 0.9])
            .all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(soft_consensus(&[]).is_err());
    }

    #[test]
    fn offline_static_scene_gives_constant_mask() {
        let w = 6u32;
        let prob: Vec<f64> = (0..w * 3)
            .map(|i| if i % w < 3 { 0.9 } else { 0.1 })
            .collect();
        let samples: Vec<SoftFrame> = uniform_indices(30, 10)
            .into_iter()
            .map(|t| SoftFrame::new(t, w, 3, prob.clone(), 0.8).unwrap())
            .collect();
        let mut p = IdentityPropagator::new();
        let out = run_offline_soft(&samples, 30, &mut p).unwrap();
        let expect = BinaryMask::rect(w, 3, 0, 0, 3, 3);
        assert_eq!(out.len(), 30);
        assert!(out.iter().all(|m| *m == expect));
    }

    #[test]
    fn offline_empty_consensus_is_empty_everywhere() {
        let samples = vec![SoftFrame::new(0, 2, 2, vec![0.1; 4], 0.5).unwrap()];
        let mut p = IdentityPropagator::new();
        let out = run_offline_soft(&samples, 3, &mut p).unwrap();
        assert!(out.iter().all(|m| m.is_empty()));
    }

    #[test]
    fn uniform_indices_spread() {
        assert_eq!(
            uniform_indices(100, 10),
            vec![5, 15, 25, 35, 45, 55, 65, 75, 85, 95]
        );
        assert_eq!(uniform_indices(4, 10), vec![0, 1, 2, 3]);
        assert!(uniform_indices(0, 10).is_empty());
    }

    #[test]
    fn argmax_fusion() {
        let maps = vec![
            (SegmentId(1), vec![0.9, 0.6, 0.2, 0.3]),
            (SegmentId(2), vec![0.1, 0.7, 0.4, 0.3]),
        ];
        let s = fuse_argmax(0, 4, 1, &maps).unwrap();
        assert_eq!(
            s.get(SegmentId(1)).unwrap().mask.to_bitmap(),
            vec![true, false, false, false]
        );
        assert_eq!(
            s.get(SegmentId(2)).unwrap().mask.to_bitmap(),
            vec![false, true, false, false]
        );
    }
}
