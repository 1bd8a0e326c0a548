//! Temporal propagation contract and deterministic reference propagators.
//!
//! A propagator memorizes segmented frames and segments a query frame with
//! the same ids. Every active id is emitted on query, with an empty mask when
//! the object is no longer visible; deciding deletion is the caller's job.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{render_non_overlapping, BinaryMask, ClassId, Segment, SegmentId, Segmentation};
use crate::synth::Scene;

pub trait Propagator: Send {
    /// Adds a segmented frame to memory.
    fn update(&mut self, seg: &Segmentation) -> Result<()>;

    /// Segments `query_frame` using the memory.
    fn propagate(&mut self, query_frame: usize) -> Result<Segmentation>;

    /// Forgets the given ids.
    fn remove(&mut self, ids: &[SegmentId]);

    /// Clears the whole memory.
    fn reset(&mut self);

    /// A fresh instance of the same kind with empty memory.
    fn spawn(&self) -> Result<Box<dyn Propagator>>;

    /// Digest of the memory contents, for checking that callers left it untouched.
    fn state_digest(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq, Hash)]
pub struct MemoryEntry {
    pub frame: usize,
    pub mask: BinaryMask,
    pub class_label: Option<ClassId>,
}

/// Most recent mask per active id.
#[derive(Debug, Clone, Default, PartialEq, Hash)]
pub struct PropagatorMemory {
    entries: BTreeMap<SegmentId, MemoryEntry>,
    dims: Option<(u32, u32)>,
    last_frame: Option<usize>,
}

impl PropagatorMemory {
    pub fn is_empty(&self) -> bool {
        self.last_frame.is_none()
    }

    pub fn active_ids(&self) -> Vec<SegmentId> {
        self.entries.keys().copied().collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (SegmentId, &MemoryEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn dims(&self) -> Option<(u32, u32)> {
        self.dims
    }

    /// Ids present in `seg` take its masks; active ids missing from it become empty.
    pub fn update(&mut self, seg: &Segmentation) {
        let (w, h) = (seg.width(), seg.height());
        self.dims = Some((w, h));
        self.last_frame = Some(seg.frame());
        for entry in self.entries.values_mut() {
            entry.mask = BinaryMask::empty(w, h);
            entry.frame = seg.frame();
        }
        for s in seg.segments() {
            self.entries.insert(
                s.id,
                MemoryEntry {
                    frame: seg.frame(),
                    mask: s.mask.clone(),
                    class_label: s.class_label,
                },
            );
        }
    }

    pub fn remove(&mut self, ids: &[SegmentId]) {
        for id in ids {
            self.entries.remove(id);
        }
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }
}

/// Builds a query result: non-empty masks resolved for overlap, then one empty
/// mask for every remaining active id.
fn assemble(frame: usize, (w, h): (u32, u32), masks: Vec<Segment>) -> Result<Segmentation> {
    let ids: Vec<SegmentId> = masks.iter().map(|s| s.id).collect();
    let (filled, empty): (Vec<_>, Vec<_>) = masks.into_iter().partition(|s| !s.mask.is_empty());
    let rendered = render_non_overlapping(frame, w, h, filled)?;
    let mut segments = rendered.into_segments();
    for mut s in empty {
        s.mask = BinaryMask::empty(w, h);
        segments.push(s);
    }
    for id in ids {
        if !segments.iter().any(|s| s.id == id) {
            segments.push(Segment::new(id, BinaryMask::empty(w, h)));
        }
    }
    segments.sort_by_key(|s| s.id);
    Segmentation::new(frame, w, h, segments)
}

/// Returns the memorized masks unchanged.
#[derive(Debug, Clone, Default)]
pub struct IdentityPropagator {
    memory: PropagatorMemory,
}

impl IdentityPropagator {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Propagator for IdentityPropagator {
    fn update(&mut self, seg: &Segmentation) -> Result<()> {
        self.memory.update(seg);
        Ok(())
    }

    fn propagate(&mut self, query_frame: usize) -> Result<Segmentation> {
        let dims = self.memory.dims.ok_or(Error::EmptyMemory)?;
        let masks = self
            .memory
            .entries()
            .map(|(id, e)| Segment {
                id,
                mask: e.mask.clone(),
                class_label: e.class_label,
                confidence: None,
            })
            .collect();
        assemble(query_frame, dims, masks)
    }

    fn remove(&mut self, ids: &[SegmentId]) {
        self.memory.remove(ids);
    }

    fn reset(&mut self) {
        self.memory.clear();
    }

    fn spawn(&self) -> Result<Box<dyn Propagator>> {
        Ok(Box::new(Self::new()))
    }

    fn state_digest(&self) -> u64 {
        self.memory.digest()
    }
}

/// Moves memorized masks with the ground-truth motion of the scene.
///
/// On update each mask is attributed to the visible object it overlaps most
/// (ties to the lower object id). On query the mask is warped by that
/// object's script, pixels now covered by other objects are removed, and
/// pixels of the object that were hidden at memorization time but are visible
/// now are added. On a noise-free scene this reproduces the ground truth.
/// Masks attributed to no object stay where they are.
#[derive(Debug, Clone)]
pub struct MotionOraclePropagator {
    scene: Arc<Scene>,
    memory: PropagatorMemory,
    owners: BTreeMap<SegmentId, Option<u32>>,
}

impl MotionOraclePropagator {
    pub fn new(scene: Arc<Scene>) -> Self {
        MotionOraclePropagator {
            scene,
            memory: PropagatorMemory::default(),
            owners: BTreeMap::new(),
        }
    }

    fn attribute(visible: &[(u32, BinaryMask)], mask: &BinaryMask) -> Option<u32> {
        let mut best: Option<(u64, u32)> = None;
        for (id, vis) in visible {
            let id = *id;
            let overlap = mask.intersection_area(vis).unwrap_or(0);
            if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, id));
            }
        }
        best.map(|(_, id)| id)
    }

    fn carry(
        &self,
        entry: &MemoryEntry,
        owner: Option<u32>,
        query: usize,
        visible_now: &[(u32, BinaryMask)],
        visible_then: &[(u32, BinaryMask)],
    ) -> BinaryMask {
        let (w, h) = (entry.mask.width(), entry.mask.height());
        let Some(obj) = owner else {
            return entry.mask.clone();
        };
        let Some(script) = self.scene.script(obj) else {
            return entry.mask.clone();
        };
        if query >= self.scene.length || !script.alive(query) {
            return BinaryMask::empty(w, h);
        }
        let mut own_now = BinaryMask::empty(w, h);
        let mut others_now = BinaryMask::empty(w, h);
        for (id, m) in visible_now {
            if *id == obj {
                own_now = m.clone();
            } else {
                others_now = others_now.union(m).expect("scene canvas");
            }
        }
        let own_then = visible_then
            .iter()
            .find(|(id, _)| *id == obj)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(|| BinaryMask::empty(w, h));
        let warped = script.warp(&entry.mask, entry.frame, query);
        let revealed = own_now
            .difference(&script.warp(&own_then, entry.frame, query))
            .expect("scene canvas");
        warped
            .union(&revealed)
            .and_then(|m| m.difference(&others_now))
            .expect("scene canvas")
    }

    fn visible(&self, frame: usize) -> Vec<(u32, BinaryMask)> {
        if frame < self.scene.length {
            self.scene.visible_masks(frame)
        } else {
            Vec::new()
        }
    }
}

impl Propagator for MotionOraclePropagator {
    fn update(&mut self, seg: &Segmentation) -> Result<()> {
        if (seg.width(), seg.height()) != (self.scene.width, self.scene.height) {
            return Err(Error::DimensionMismatch {
                left: (self.scene.width, self.scene.height),
                right: (seg.width(), seg.height()),
            });
        }
        self.memory.update(seg);
        let visible = self.visible(seg.frame());
        for s in seg.segments() {
            let owner = Self::attribute(&visible, &s.mask);
            self.owners.insert(s.id, owner);
        }
        Ok(())
    }

    fn propagate(&mut self, query_frame: usize) -> Result<Segmentation> {
        let dims = self.memory.dims.ok_or(Error::EmptyMemory)?;
        let visible_now = self.visible(query_frame);
        let mut then_cache: BTreeMap<usize, Vec<(u32, BinaryMask)>> = BTreeMap::new();
        let mut masks = Vec::new();
        for (id, e) in self.memory.entries() {
            let owner = self.owners.get(&id).copied().flatten();
            let mask = if e.mask.is_empty() {
                e.mask.clone()
            } else {
                let then = then_cache
                    .entry(e.frame)
                    .or_insert_with(|| self.visible(e.frame));
                self.carry(e, owner, query_frame, &visible_now, then)
            };
            masks.push(Segment {
                id,
                mask,
                class_label: e.class_label,
                confidence: None,
            });
        }
        assemble(query_frame, dims, masks)
    }

    fn remove(&mut self, ids: &[SegmentId]) {
        self.memory.remove(ids);
        for id in ids {
            self.owners.remove(id);
        }
    }

    fn reset(&mut self) {
        self.memory.clear();
        self.owners.clear();
    }

    fn spawn(&self) -> Result<Box<dyn Propagator>> {
        Ok(Box::new(Self::new(Arc::clone(&self.scene))))
    }

    fn state_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.memory.hash(&mut h);
        self.owners.hash(&mut h);
        h.finish()
    }
}

/// One segment on the external-propagator wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSegment {
    pub id: u32,
    pub rle: Vec<u32>,
    pub w: u32,
    pub h: u32,
}

impl WireSegment {
    pub fn from_segment(s: &Segment) -> Self {
        WireSegment {
            id: s.id.0,
            rle: s.mask.runs().to_vec(),
            w: s.mask.width(),
            h: s.mask.height(),
        }
    }

    pub fn to_mask(&self) -> Result<BinaryMask> {
        BinaryMask::from_runs(self.w, self.h, self.rle.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireCommand {
    Update,
    Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub cmd: WireCommand,
    pub frame: usize,
    pub segments: Vec<WireSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub segments: Vec<WireSegment>,
}

/// Talks newline-delimited JSON to a child process.
///
/// Every request gets exactly one response line, in order; only query
/// responses are interpreted. A query carries the last memorized mask of each
/// active id, so a process that echoes its input acts as an identity
/// propagator. Removal and reset are applied locally: responses are filtered
/// to the ids this side still considers active.
pub struct ExternalPropagator {
    command: String,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    memory: PropagatorMemory,
}

impl ExternalPropagator {
    /// Launches `command` through `sh -c`.
    pub fn launch(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalPropagator {
            command: command.to_string(),
            child,
            stdin,
            stdout,
            memory: PropagatorMemory::default(),
        })
    }

    fn round_trip(&mut self, req: &WireRequest) -> Result<String> {
        let line = serde_json::to_string(req).map_err(|e| Error::External(e.to_string()))?;
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::External(format!("write to `{}`: {e}", self.command)))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::External(format!("read from `{}`: {e}", self.command)))?;
        if n == 0 {
            return Err(Error::External(format!(
                "`{}` closed its output",
                self.command
            )));
        }
        Ok(reply)
    }
}

impl Propagator for ExternalPropagator {
    fn update(&mut self, seg: &Segmentation) -> Result<()> {
        let req = WireRequest {
            cmd: WireCommand::Update,
            frame: seg.frame(),
            segments: seg
                .segments()
                .iter()
                .map(WireSegment::from_segment)
                .collect(),
        };
        self.round_trip(&req)?;
        self.memory.update(seg);
        Ok(())
    }

    fn propagate(&mut self, query_frame: usize) -> Result<Segmentation> {
        let dims = self.memory.dims.ok_or(Error::EmptyMemory)?;
        let hint = self
            .memory
            .entries()
            .map(|(id, e)| WireSegment {
                id: id.0,
                rle: e.mask.runs().to_vec(),
                w: dims.0,
                h: dims.1,
            })
            .collect();
        let req = WireRequest {
            cmd: WireCommand::Query,
            frame: query_frame,
            segments: hint,
        };
        let reply = self.round_trip(&req)?;
        let resp: WireResponse = serde_json::from_str(reply.trim())
            .map_err(|e| Error::External(format!("malformed query response: {e}")))?;
        let mut masks = Vec::new();
        for ws in &resp.segments {
            let id = SegmentId(ws.id);
            let Some(entry) = self.memory.entries.get(&id) else {
                continue;
            };
            let mask = ws.to_mask()?;
            if (mask.width(), mask.height()) != dims {
                return Err(Error::DimensionMismatch {
                    left: dims,
                    right: (mask.width(), mask.height()),
                });
            }
            masks.push(Segment {
                id,
                mask,
                class_label: entry.class_label,
                confidence: None,
            });
        }
        for (id, e) in self.memory.entries() {
            if !masks.iter().any(|s| s.id == id) {
                masks.push(Segment {
                    id,
                    mask: BinaryMask::empty(dims.0, dims.1),
                    class_label: e.class_label,
                    confidence: None,
                });
            }
        }
        assemble(query_frame, dims, masks)
    }

    fn remove(&mut self, ids: &[SegmentId]) {
        self.memory.remove(ids);
    }

    fn reset(&mut self) {
        self.memory.clear();
    }

    fn spawn(&self) -> Result<Box<dyn Propagator>> {
        Ok(Box::new(Self::launch(&self.command)?))
    }

    fn state_digest(&self) -> u64 {
        self.memory.digest()
    }
}

impl Drop for ExternalPropagator {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Aligns a segmentation from another frame onto `target_frame` using a
/// private one-frame memory. The caller's propagator is not touched.
pub fn align_one(
    source: &Segmentation,
    target_frame: usize,
    propagator: &dyn Propagator,
) -> Result<Segmentation> {
    if source.frame() == target_frame {
        return Ok(source.clone());
    }
    let mut scratch = propagator.spawn()?;
    scratch.update(source)?;
    let aligned = scratch.propagate(target_frame)?;
    let (w, h) = (aligned.width(), aligned.height());
    let segments = aligned
        .into_segments()
        .into_iter()
        .map(|mut s| {
            if let Some(orig) = source.get(s.id) {
                s.class_label = orig.class_label;
                s.confidence = orig.confidence;
            }
            s
        })
        .collect();
    Segmentation::new(target_frame, w, h, segments)
}
