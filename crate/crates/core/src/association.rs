//! Merging propagated segmentations with consensus, and track bookkeeping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::{render_non_overlapping, ClassId, Segment, SegmentId, Segmentation};

/// Minimum IoU for a propagated segment and a consensus segment to associate.
pub const ASSOCIATION_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: SegmentId,
    /// Consecutive merges without a consensus match.
    pub cnt: u32,
    pub class_votes: Vec<ClassId>,
    pub birth_frame: usize,
    pub confidence: Option<f64>,
    /// Majority label as of the last merge.
    #[serde(default)]
    pub label: Option<ClassId>,
}

/// Most frequent label; among tied labels the one appended most recently.
pub fn vote_class(votes: &[ClassId]) -> Option<ClassId> {
    let mut counts: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (k, &c) in votes.iter().enumerate() {
        let e = counts.entry(c).or_insert((0, 0));
        e.0 += 1;
        e.1 = k;
    }
    counts
        .into_iter()
        .max_by_key(|&(_, (count, last))| (count, last))
        .map(|(c, _)| c)
}

/// Live tracks plus the id counter. Ids are never reused within a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackTable {
    tracks: BTreeMap<SegmentId, Track>,
    next_id: u32,
}

impl TrackTable {
    pub fn new() -> Self {
        TrackTable {
            tracks: BTreeMap::new(),
            next_id: 1,
        }
    }

    pub fn get(&self, id: SegmentId) -> Option<&Track> {
        self.tracks.get(&id)
    }

    pub fn get_mut(&mut self, id: SegmentId) -> Option<&mut Track> {
        self.tracks.get_mut(&id)
    }

    pub fn contains(&self, id: SegmentId) -> bool {
        self.tracks.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    fn mint(&mut self) -> SegmentId {
        let id = SegmentId(self.next_id.max(1));
        self.next_id = id.0 + 1;
        id
    }

    pub fn spawn(
        &mut self,
        frame: usize,
        label: Option<ClassId>,
        confidence: Option<f64>,
    ) -> SegmentId {
        let id = self.mint();
        self.tracks.insert(
            id,
            Track {
                id,
                cnt: 0,
                class_votes: label.into_iter().collect(),
                birth_frame: frame,
                confidence,
                label,
            },
        );
        id
    }

    /// Moves a track to a freshly minted id, keeping its history.
    pub fn rename(&mut self, id: SegmentId, frame: usize) -> Option<SegmentId> {
        let mut track = self.tracks.remove(&id)?;
        let new_id = self.mint();
        track.id = new_id;
        track.birth_frame = frame;
        self.tracks.insert(new_id, track);
        Some(new_id)
    }

    pub fn remove(&mut self, id: SegmentId) -> Option<Track> {
        self.tracks.remove(&id)
    }

    pub fn label_of(&self, id: SegmentId) -> Option<ClassId> {
        self.tracks.get(&id).and_then(|t| t.label)
    }
}

/// Index pairs `(i, j)` associating `R[i]` with `C[j]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_r: Vec<usize>,
    pub unmatched_c: Vec<usize>,
}

impl Association {
    pub fn partner_of_r(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == i).map(|p| p.1)
    }

    pub fn total_iou(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }
}

/// Associates every pair with IoU above 0.5. Within non-overlapping
/// segmentations such a pair is unique per segment, so the greedy choice is
/// the maximum-weight matching.
pub fn match_segments(r: &Segmentation, c: &Segmentation) -> Result<Association> {
    let mut candidates = Vec::new();
    for (i, rs) in r.segments().iter().enumerate() {
        for (j, cs) in c.segments().iter().enumerate() {
            let iou = rs.mask.iou(&cs.mask)?;
            if iou > ASSOCIATION_IOU {
                candidates.push((i, j, iou));
            }
        }
    }
    let mut used_r = vec![false; r.len()];
    let mut used_c = vec![false; c.len()];
    let mut pairs = Vec::new();
    for (i, j, iou) in candidates {
        if !used_r[i] && !used_c[j] {
            used_r[i] = true;
            used_c[j] = true;
            pairs.push((i, j, iou));
        }
    }
    Ok(Association {
        pairs,
        unmatched_r: (0..r.len()).filter(|&i| !used_r[i]).collect(),
        unmatched_c: (0..c.len()).filter(|&j| !used_c[j]).collect(),
    })
}

/// Counter update after a merge: matched tracks reset, unmatched ones count
/// a miss. Tracks reaching `limit` misses are removed and returned.
pub fn update_lifecycle(
    tracks: &mut TrackTable,
    r: &Segmentation,
    assoc: &Association,
    limit: u32,
) -> Vec<SegmentId> {
    let mut deleted = Vec::new();
    for (i, s) in r.segments().iter().enumerate() {
        let Some(track) = tracks.get_mut(s.id) else {
            continue;
        };
        if assoc.partner_of_r(i).is_some() {
            track.cnt = 0;
        } else {
            track.cnt += 1;
            if track.cnt >= limit {
                deleted.push(s.id);
            }
        }
    }
    for id in &deleted {
        tracks.remove(*id);
    }
    deleted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MergeOptions {
    /// Drop propagated segments without a consensus partner.
    pub discard_unmatched_propagation: bool,
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub output: Segmentation,
    pub spawned: Vec<SegmentId>,
    /// `(old, new)` ids of tracks whose majority label changed.
    pub renamed: Vec<(SegmentId, SegmentId)>,
}

/// Fuses associated pairs by union under the propagated id, passes unmatched
/// propagated segments through, and starts a track for each unmatched
/// consensus segment. Propagated segments whose track is gone are skipped.
pub fn merge(
    r: &Segmentation,
    c: &Segmentation,
    tracks: &mut TrackTable,
    assoc: &Association,
    opts: MergeOptions,
) -> Result<MergeOutcome> {
    let frame = c.frame().max(r.frame());
    let (w, h) = (c.width(), c.height());
    let mut segments = Vec::new();
    let mut renamed = Vec::new();
    for &(i, j, _) in &assoc.pairs {
        let (rs, cs) = (&r.segments()[i], &c.segments()[j]);
        let Some(track) = tracks.get_mut(rs.id) else {
            continue;
        };
        if let Some(label) = cs.class_label {
            track.class_votes.push(label);
        }
        if cs.confidence.is_some() {
            track.confidence = cs.confidence;
        }
        let voted = vote_class(&track.class_votes);
        let previous = track.label;
        track.label = voted;
        let mut id = rs.id;
        if previous.is_some() && voted != previous {
            id = tracks.rename(rs.id, frame).expect("track exists");
            renamed.push((rs.id, id));
        }
        segments.push(Segment {
            id,
            mask: rs.mask.union(&cs.mask)?,
            class_label: voted,
            confidence: cs.confidence,
        });
    }
    if !opts.discard_unmatched_propagation {
        for &i in &assoc.unmatched_r {
            let rs = &r.segments()[i];
            if let Some(track) = tracks.get(rs.id) {
                if !rs.mask.is_empty() {
                    segments.push(Segment {
                        id: rs.id,
                        mask: rs.mask.clone(),
                        class_label: track.label.or(rs.class_label),
                        confidence: track.confidence,
                    });
                }
            }
        }
    }
    let mut spawned = Vec::new();
    for &j in &assoc.unmatched_c {
        let cs = &c.segments()[j];
        let id = tracks.spawn(frame, cs.class_label, cs.confidence);
        spawned.push(id);
        segments.push(Segment {
            id,
            mask: cs.mask.clone(),
            class_label: cs.class_label,
            confidence: cs.confidence,
        });
    }
    let output = render_non_overlapping(frame, w, h, segments)?;
    Ok(MergeOutcome {
        output,
        spawned,
        renamed,
    })
}
