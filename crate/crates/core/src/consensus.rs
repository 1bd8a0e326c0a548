//! In-clip consensus over a short window of image segmentations.
//!
//! Every segment of the clip is aligned onto the target frame and becomes a
//! proposal. Two proposals support each other when their IoU exceeds the
//! support threshold. Selection maximizes, over the indicator `v`,
//!
//! ```text
//!     sum_i v_i * (sum_{j != i, IoU_ij > theta} IoU_ij  -  alpha)
//!     subject to  v_i * v_j = 0  whenever IoU_ij > theta
//! ```
//!
//! The support sum does not depend on `v`, so each proposal carries a fixed
//! node weight and the program is a maximum-weight independent set on the
//! support graph. It is solved exactly per connected component by branch and
//! bound, falling back to a greedy pass for components above a size cap.
//!
//! Among equal-objective selections the preferred one is lexicographically
//! first in priority order: lower source frame offset, then larger area, then
//! lower pool index.

use std::cmp::Ordering;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{render_non_overlapping, BinaryMask, ClassId, Segment, SegmentId, Segmentation};
use crate::propagation::{align_one, Propagator};

/// Objective differences below this are ties.
pub const OBJECTIVE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    /// Per-selection penalty.
    pub alpha: f64,
    /// IoU above which two proposals support (and exclude) each other.
    pub theta: f64,
    /// Largest component solved exactly.
    pub exact_cap: usize,
    /// Align clip frames onto the target with the propagator; when off, proposals keep their own-frame masks.
    pub spatial_alignment: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            alpha: 0.5,
            theta: 0.5,
            exact_cap: 24,
            spatial_alignment: true,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!(
                "theta {} outside (0, 1)",
                self.theta
            )));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha {} is negative", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mask: BinaryMask,
    pub source_frame_offset: usize,
    /// Id of the segment in its source frame.
    pub source_id: SegmentId,
    pub class_label: Option<ClassId>,
    pub confidence: Option<f64>,
}

/// Aligns every segment of `clip` onto the frame of `clip[0]`.
///
/// `clip[i]` is the segmentation of frame `target + i`. Proposals that end
/// up empty after alignment are dropped.
pub fn pool_proposals(
    clip: &[Segmentation],
    propagator: &dyn Propagator,
    spatial_alignment: bool,
) -> Result<Vec<Proposal>> {
    let Some(first) = clip.first() else {
        return Ok(Vec::new());
    };
    let target = first.frame();
    let mut pool = Vec::new();
    for (offset, seg) in clip.iter().enumerate() {
        let aligned = if offset == 0 || !spatial_alignment {
            seg.clone()
        } else {
            align_one(seg, target, propagator)?
        };
        for s in aligned.segments() {
            if s.mask.is_empty() {
                continue;
            }
            pool.push(Proposal {
                mask: s.mask.clone(),
                source_frame_offset: offset,
                source_id: s.id,
                class_label: s.class_label,
                confidence: s.confidence,
            });
        }
    }
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportGraph {
    pub weights: Vec<f64>,
    /// Unordered pairs `(i, j)` with `i < j` and IoU above the threshold.
    pub edges: Vec<(usize, usize, f64)>,
    pub adjacency: Vec<Vec<usize>>,
    /// Rank of each node in the tie-break order; rank 0 is most preferred.
    pub priority: Vec<usize>,
    pub alpha: f64,
    pub theta: f64,
}

impl SupportGraph {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].contains(&j)
    }

    /// Connected components, each sorted by priority rank.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut k = 0;
            while k < comp.len() {
                for &nb in &self.adjacency[comp[k]] {
                    if !seen[nb] {
                        seen[nb] = true;
                        comp.push(nb);
                    }
                }
                k += 1;
            }
            comp.sort_by_key(|&i| self.priority[i]);
            comps.push(comp);
        }
        comps
    }
}

/// Tie-break order over the pool: lower frame offset, larger area, lower index.
pub fn priority_order(pool: &[Proposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[a]
            .source_frame_offset
            .cmp(&pool[b].source_frame_offset)
            .then(pool[b].mask.area().cmp(&pool[a].mask.area()))
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; pool.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

pub fn build_support_graph(pool: &[Proposal], alpha: f64, theta: f64) -> Result<SupportGraph> {
    let n = pool.len();
    let mut support = vec![0.0; n];
    let mut adjacency = vec![Vec::new(); n];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            // same-frame proposals are disjoint
            if pool[i].source_frame_offset == pool[j].source_frame_offset {
                continue;
            }
            let iou = pool[i].mask.iou(&pool[j].mask)?;
            if iou > theta {
                support[i] += iou;
                support[j] += iou;
                adjacency[i].push(j);
                adjacency[j].push(i);
                edges.push((i, j, iou));
            }
        }
    }
    Ok(SupportGraph {
        weights: support.into_iter().map(|s| s - alpha).collect(),
        edges,
        adjacency,
        priority: priority_order(pool),
        alpha,
        theta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indicator: Vec<bool>,
    pub objective: f64,
    /// False when some component exceeded the exact cap and was solved greedily.
    pub exact: bool,
}

pub fn solve_consensus(graph: &SupportGraph, exact_cap: usize) -> Selection {
    let mut indicator = vec![false; graph.len()];
    let mut exact = true;
    for comp in graph.components() {
        let chosen = if comp.len() <= exact_cap {
            solve_component_exact(graph, &comp)
        } else {
            warn!(
                "support component of {} proposals exceeds exact cap {}; using greedy selection",
                comp.len(),
                exact_cap
            );
            exact = false;
            solve_component_greedy(graph, &comp)
        };
        for i in chosen {
            indicator[i] = true;
        }
    }
    let objective = indicator
        .iter()
        .zip(&graph.weights)
        .filter(|(v, _)| **v)
        .map(|(_, w)| w)
        .sum();
    Selection {
        indicator,
        objective,
        exact,
    }
}

struct BranchAndBound<'a> {
    graph: &'a SupportGraph,
    order: &'a [usize],
    blocked: Vec<u32>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl BranchAndBound<'_> {
    fn bound(&self, k: usize, current: f64) -> f64 {
        current
            + self.order[k..]
                .iter()
                .filter(|&&i| self.blocked[i] == 0)
                .map(|&i| self.graph.weights[i].max(0.0))
                .sum::<f64>()
    }

    // include-first depth-first search visits selections in lexicographically
    // decreasing priority order, so the first optimum found is the preferred one
    fn search(&mut self, k: usize, current: f64) {
        if let Some((best, _)) = &self.best {
            if self.bound(k, current) <= best + OBJECTIVE_EPS {
                return;
            }
        }
        if k == self.order.len() {
            self.best = Some((current, self.chosen.clone()));
            return;
        }
        let node = self.order[k];
        let w = self.graph.weights[node];
        if self.blocked[node] == 0 && w > -OBJECTIVE_EPS {
            for &nb in &self.graph.adjacency[node] {
                self.blocked[nb] += 1;
            }
            self.chosen.push(node);
            self.search(k + 1, current + w);
            self.chosen.pop();
            for &nb in &self.graph.adjacency[node] {
                self.blocked[nb] -= 1;
            }
        }
        self.search(k + 1, current);
    }
}

fn solve_component_exact(graph: &SupportGraph, comp: &[usize]) -> Vec<usize> {
    let mut bb = BranchAndBound {
        graph,
        order: comp,
        blocked: vec![0; graph.len()],
        chosen: Vec::new(),
        best: None,
    };
    bb.search(0, 0.0);
    bb.best.map(|(_, c)| c).unwrap_or_default()
}

fn solve_component_greedy(graph: &SupportGraph, comp: &[usize]) -> Vec<usize> {
    let mut order = comp.to_vec();
    order.sort_by(|&a, &b| {
        graph.weights[b]
            .partial_cmp(&graph.weights[a])
            .unwrap_or(Ordering::Equal)
            .then(graph.priority[a].cmp(&graph.priority[b]))
    });
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if graph.weights[i] > -OBJECTIVE_EPS && !chosen.iter().any(|&c| graph.adjacent(i, c)) {
            chosen.push(i);
        }
    }
    chosen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Select,
    Reject,
    Passthrough,
}

/// Everything computed on the way to a consensus, for inspection.
#[derive(Debug, Clone)]
pub struct ConsensusTrace {
    pub pool: Vec<Proposal>,
    pub graph: SupportGraph,
    pub selection: Selection,
    pub output: Segmentation,
    /// Set for one-frame clips, which skip the solver.
    pub passthrough: bool,
}

impl ConsensusTrace {
    pub fn verdicts(&self) -> Vec<Verdict> {
        self.selection
            .indicator
            .iter()
            .map(|&v| match (self.passthrough, v) {
                (true, _) => Verdict::Passthrough,
                (false, true) => Verdict::Select,
                (false, false) => Verdict::Reject,
            })
            .collect()
    }
}

/// Denoised segmentation of `clip[0]`'s frame. A one-frame clip passes through verbatim.
pub fn consensus(
    clip: &[Segmentation],
    propagator: &dyn Propagator,
    cfg: &ConsensusConfig,
) -> Result<Segmentation> {
    Ok(consensus_trace(clip, propagator, cfg)?.output)
}

pub fn consensus_trace(
    clip: &[Segmentation],
    propagator: &dyn Propagator,
    cfg: &ConsensusConfig,
) -> Result<ConsensusTrace> {
    cfg.validate()?;
    let first = clip
        .first()
        .ok_or_else(|| Error::Input("consensus over an empty clip".into()))?;
    let pool = pool_proposals(clip, propagator, cfg.spatial_alignment)?;
    let graph = build_support_graph(&pool, cfg.alpha, cfg.theta)?;
    if clip.len() == 1 {
        let n = pool.len();
        return Ok(ConsensusTrace {
            pool,
            graph,
            selection: Selection {
                indicator: vec![true; n],
                objective: 0.0,
                exact: true,
            },
            output: first.clone(),
            passthrough: true,
        });
    }
    let selection = solve_consensus(&graph, cfg.exact_cap);
    let segments = pool
        .iter()
        .enumerate()
        .filter(|(i, _)| selection.indicator[*i])
        .map(|(i, p)| Segment {
            id: SegmentId(i as u32 + 1),
            mask: p.mask.clone(),
            class_label: p.class_label,
            confidence: p.confidence,
        })
        .collect();
    let output = render_non_overlapping(first.frame(), first.width(), first.height(), segments)?;
    Ok(ConsensusTrace {
        pool,
        graph,
        selection,
        output,
        passthrough: false,
    })
}
