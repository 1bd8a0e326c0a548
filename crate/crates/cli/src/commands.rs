use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use deva_fuse::consensus::{consensus_trace, Verdict};
use deva_fuse::metrics::{evaluate, MetricOptions, MetricReport, TrackedVideo, Window};
use deva_fuse::pipeline::{run, Mode, PipelineConfig, PipelineOutput};
use deva_fuse::propagation::{
    ExternalPropagator, IdentityPropagator, MotionOraclePropagator, Propagator,
};
use deva_fuse::synth::Scene;
use deva_fuse::{SegmentId, Segmentation};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{
    frame_count, frames_dir, list_videos, read_scene, subdirectories, synthesize, write_bundle,
};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{infer_frame_count, read_frames, write_frames, write_json};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropagatorSpec {
    Identity,
    Oracle,
    External(String),
}

impl FromStr for PropagatorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "identity" => Ok(PropagatorSpec::Identity),
            "oracle" => Ok(PropagatorSpec::Oracle),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => {
                    Ok(PropagatorSpec::External(cmd.to_string()))
                }
                _ => Err(format!(
                    "unknown propagator `{s}`; expected identity, oracle or external:<cmd>"
                )),
            },
        }
    }
}

impl std::fmt::Display for PropagatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PropagatorSpec::Identity => write!(f, "identity"),
            PropagatorSpec::Oracle => write!(f, "oracle"),
            PropagatorSpec::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

impl PropagatorSpec {
    /// Builds a propagator; the oracle needs the video's motion scripts.
    pub fn build(&self, scene: Option<Arc<Scene>>) -> CliResult<Box<dyn Propagator>> {
        Ok(match self {
            PropagatorSpec::Identity => Box::new(IdentityPropagator::new()),
            PropagatorSpec::Oracle => {
                let scene = scene.ok_or_else(|| {
                    CliError::Usage("the oracle propagator needs motion scripts".into())
                })?;
                Box::new(MotionOraclePropagator::new(scene))
            }
            PropagatorSpec::External(cmd) => Box::new(ExternalPropagator::launch(cmd)?),
        })
    }
}

fn thread_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

/// Runs `f` over `items` on a pool of `jobs` workers, keeping input order.
/// The first failure in input order wins, so errors are deterministic.
fn par_map<T: Sync, R: Send>(
    jobs: Option<usize>,
    items: &[T],
    f: impl Fn(&T) -> CliResult<R> + Sync + Send,
) -> CliResult<Vec<R>> {
    let pool = thread_pool(jobs)?;
    let results: Vec<CliResult<R>> = pool.install(|| items.par_iter().map(f).collect());
    results.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub config: Config,
    pub propagator: PropagatorSpec,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

/// What a run was asked to do, stored next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub input: String,
    pub mode: Mode,
    pub propagator: String,
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub videos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub id: u32,
    pub class: Option<u32>,
    pub first_frame: usize,
    pub last_frame: usize,
    pub frames: usize,
    /// Still in the track table when the video ended.
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionRecord {
    pub frame: usize,
    pub id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracksFile {
    pub video: String,
    pub mode: Mode,
    pub frames: usize,
    pub tracks: Vec<TrackSummary>,
    pub deleted: Vec<DeletionRecord>,
    pub warnings: Vec<String>,
}

pub fn summarize_tracks(video: &str, mode: Mode, out: &PipelineOutput) -> TracksFile {
    let mut seen: BTreeMap<SegmentId, TrackSummary> = BTreeMap::new();
    for f in &out.frames {
        for s in f.segments() {
            let e = seen.entry(s.id).or_insert(TrackSummary {
                id: s.id.0,
                class: None,
                first_frame: f.frame(),
                last_frame: f.frame(),
                frames: 0,
                alive: false,
            });
            e.last_frame = f.frame();
            e.frames += 1;
            e.class = s.class_label.map(|c| c.0).or(e.class);
        }
    }
    for t in seen.values_mut() {
        t.alive = out.tracks.contains(SegmentId(t.id));
    }
    TracksFile {
        video: video.to_string(),
        mode,
        frames: out.frames.len(),
        tracks: seen.into_values().collect(),
        deleted: out
            .deleted
            .iter()
            .map(|&(frame, id)| DeletionRecord { frame, id: id.0 })
            .collect(),
        warnings: out.warnings.clone(),
    }
}

/// Runs the configured mode on one video's proposals.
pub fn run_video(
    proposals: Vec<Segmentation>,
    propagator: &mut dyn Propagator,
    cfg: &PipelineConfig,
) -> CliResult<PipelineOutput> {
    let n = proposals.len();
    let mut source = proposals;
    Ok(run(n, &mut source, propagator, cfg)?)
}

/// Output directory of a mode; every mode, baseline included, gets its own.
pub fn mode_dir(out: &Path, mode: Mode) -> PathBuf {
    out.join(mode.name())
}

/// Proposals of one video and, for the oracle propagator, its scene.
type VideoInput = (Vec<Segmentation>, Option<Arc<Scene>>);

pub fn cmd_run(args: &RunArgs) -> CliResult<PathBuf> {
    let cfg = args.config.pipeline_config();
    cfg.validate()?;
    if cfg.mode == Mode::OfflineSoft {
        return Err(CliError::Usage(
            "offline_soft consumes probability maps and is available through the library only"
                .into(),
        ));
    }
    let videos = list_videos(&args.input)?;
    if videos.is_empty() {
        return Err(CliError::Usage(format!(
            "no videos found under {}",
            args.input.display()
        )));
    }
    let target = mode_dir(&args.out, cfg.mode);
    info!(
        "running {} on {} videos with the {} propagator",
        cfg.mode.name(),
        videos.len(),
        args.propagator
    );

    // read everything first so a missing frame fails before any output is written
    let inputs = par_map(args.jobs, &videos, |v| {
        let dir = frames_dir(&args.input, v, "proposals");
        let frames = frame_count(&args.input, v, &dir)?;
        let proposals = read_frames(&dir, v, frames)?;
        let scene = match args.propagator {
            PropagatorSpec::Oracle => Some(Arc::new(read_scene(&args.input, v)?)),
            _ => None,
        };
        Ok((proposals, scene))
    })?;

    let jobs: Vec<(&String, VideoInput)> = videos.iter().zip(inputs).collect();
    par_map(args.jobs, &jobs, |(v, (proposals, scene))| {
        let mut prop = args.propagator.build(scene.clone())?;
        let out = run_video(proposals.clone(), prop.as_mut(), &cfg)?;
        let dir = target.join(v.as_str());
        write_frames(&dir, &out.frames)?;
        write_json(
            &dir.join("tracks.json"),
            &summarize_tracks(v, cfg.mode, &out),
        )?;
        info!(
            "{v}: {} frames, {} tracks",
            out.frames.len(),
            out.tracks.len()
        );
        Ok(())
    })?;

    let manifest = RunManifest {
        input: args.input.display().to_string(),
        mode: cfg.mode,
        propagator: args.propagator.to_string(),
        seed: args.seed,
        pipeline: cfg,
        videos,
    };
    write_json(&target.join("run.json"), &manifest)?;
    Ok(target)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub windows: Vec<Window>,
    pub options: MetricOptions,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub mean: Option<MetricReport>,
    pub videos: BTreeMap<String, MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub windows: Vec<String>,
    pub rows: Vec<EvalRow>,
}

fn row_order(name: &str) -> (usize, String) {
    let rank = Mode::ALL
        .iter()
        .position(|m| m.name() == name)
        .unwrap_or(Mode::ALL.len());
    (rank, name.to_string())
}

/// Prediction rows under `pred`: the directory itself when it holds videos
/// directly, otherwise each subdirectory (one per mode).
fn prediction_rows(pred: &Path, gt_videos: &[String]) -> CliResult<Vec<(String, PathBuf)>> {
    let subdirs = subdirectories(pred)?;
    if subdirs.iter().any(|d| gt_videos.contains(d)) || subdirs.is_empty() {
        let name = pred.file_name().map_or_else(
            || "prediction".to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        return Ok(vec![(name, pred.to_path_buf())]);
    }
    let mut rows: Vec<(String, PathBuf)> = subdirs
        .into_iter()
        .map(|d| (d.clone(), pred.join(d)))
        .collect();
    rows.sort_by_key(|(n, _)| row_order(n));
    Ok(rows)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let gt_videos = list_videos(&args.gt)?;
    let rows = prediction_rows(&args.pred, &gt_videos)?;
    let gt: Vec<(String, TrackedVideo)> = par_map(args.jobs, &gt_videos, |v| {
        let dir = frames_dir(&args.gt, v, "gt");
        let n = frame_count(&args.gt, v, &dir)?;
        Ok((v.clone(), TrackedVideo::new(read_frames(&dir, v, n)?)?))
    })?;

    let mut report = EvalReport {
        windows: args.windows.iter().map(|w| w.to_string()).collect(),
        rows: Vec::new(),
    };
    for (name, dir) in rows {
        let have = subdirectories(&dir)?;
        let missing_pred: Vec<String> = gt_videos
            .iter()
            .filter(|v| !have.contains(v))
            .cloned()
            .collect();
        let missing_gt: Vec<String> = have
            .iter()
            .filter(|v| !gt_videos.contains(v))
            .cloned()
            .collect();
        if !missing_pred.is_empty() || !missing_gt.is_empty() {
            return Err(CliError::Inventory {
                missing_pred: missing_pred.iter().map(|v| format!("{name}/{v}")).collect(),
                missing_gt,
            });
        }
        let per_video = par_map(args.jobs, &gt, |(v, g)| {
            let pred = TrackedVideo::new(read_frames(&dir.join(v), v, g.len())?)?;
            Ok((v.clone(), evaluate(&pred, g, &args.windows, &args.options)?))
        })?;
        let reports: Vec<MetricReport> = per_video.iter().map(|(_, r)| r.clone()).collect();
        report.rows.push(EvalRow {
            name,
            mean: MetricReport::mean(&reports),
            videos: per_video.into_iter().collect(),
        });
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Human-readable table: one row per prediction set, VPQ per window, then
/// the summary VPQ and STQ, all in percent.
pub fn format_table(report: &EvalReport) -> String {
    let name_w = report
        .rows
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut s = String::new();
    let _ = write!(s, "{:<name_w$}", "method");
    for k in &report.windows {
        let _ = write!(s, " {:>7}", format!("VPQ{}", superscript(k)));
    }
    let _ = writeln!(s, " {:>7} {:>7}", "VPQbar", "STQ");
    for row in &report.rows {
        let _ = write!(s, "{:<name_w$}", row.name);
        for k in &report.windows {
            let v = row
                .mean
                .as_ref()
                .and_then(|m| m.vpq.iter().find(|e| &e.k == k).and_then(|e| e.value));
            let _ = write!(s, " {:>7}", pct(v));
        }
        let bar = row.mean.as_ref().and_then(|m| m.vpq_bar);
        let stq = row.mean.as_ref().map(|m| m.stq);
        let _ = writeln!(s, " {:>7} {:>7}", pct(bar), pct(stq));
    }
    s
}

fn superscript(k: &str) -> String {
    if k == "inf" {
        return "^inf".into();
    }
    format!("^{k}")
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub out: PathBuf,
    pub config: Config,
    pub seed: Option<u64>,
    pub videos: Option<usize>,
    pub jobs: Option<usize>,
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<Vec<String>> {
    let mut cfg = args.config.clone();
    if let Some(seed) = args.seed {
        cfg.synth.seed = seed;
    }
    if let Some(n) = args.videos {
        cfg.synth.videos = n;
    }
    let pool = thread_pool(args.jobs)?;
    pool.install(|| {
        let videos = synthesize(&cfg)?;
        write_bundle(&args.out, &cfg, &videos)?;
        Ok(videos.into_iter().map(|v| v.info.name).collect())
    })
}

#[derive(Debug, Clone)]
pub struct InspectArgs {
    pub clip: PathBuf,
    pub config: Config,
    pub propagator: PropagatorSpec,
}

/// Consensus debug dump for the clip of segmentations stored in one directory.
pub fn cmd_inspect(args: &InspectArgs) -> CliResult<String> {
    let n = infer_frame_count(&args.clip)?;
    if n == 0 {
        return Err(CliError::Usage(format!(
            "no frames found in {}",
            args.clip.display()
        )));
    }
    let name = args.clip.display().to_string();
    let clip = read_frames(&args.clip, &name, n)?;
    let prop = args.propagator.build(None)?;
    let cfg = args.config.pipeline_config().consensus();
    let trace = consensus_trace(&clip, prop.as_ref(), &cfg)?;
    Ok(render_trace(&trace, cfg.exact_cap))
}

pub fn render_trace(trace: &deva_fuse::consensus::ConsensusTrace, exact_cap: usize) -> String {
    let g = &trace.graph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "proposals: {} (alpha {}, theta {})",
        trace.pool.len(),
        g.alpha,
        g.theta
    );
    for (i, p) in trace.pool.iter().enumerate() {
        let _ = writeln!(
            s,
            "  p{i}: frame +{} id {} area {} weight {:.6}",
            p.source_frame_offset,
            p.source_id,
            p.mask.area(),
            g.weights[i]
        );
    }
    let _ = writeln!(s, "edges: {}", g.edges.len());
    for &(i, j, iou) in &g.edges {
        let _ = writeln!(s, "  p{i} -- p{j} iou {iou:.6}");
    }
    let solver = if trace.passthrough {
        "passthrough (one-frame clip)".to_string()
    } else {
        let comps = g.components();
        let largest = comps.iter().map(Vec::len).max().unwrap_or(0);
        let kind = if trace.selection.exact {
            "exact"
        } else {
            "greedy fallback"
        };
        format!(
            "{kind} ({} components, largest {largest}, exact cap {exact_cap})",
            comps.len()
        )
    };
    let _ = writeln!(s, "solver: {solver}");
    let _ = writeln!(s, "objective: {:.6}", trace.selection.objective);
    let _ = writeln!(s, "verdicts:");
    for (i, v) in trace.verdicts().iter().enumerate() {
        let word = match v {
            Verdict::Select => "select",
            Verdict::Reject => "reject",
            Verdict::Passthrough => "passthrough",
        };
        let _ = writeln!(s, "  p{i}: {word}");
    }
    let _ = writeln!(s, "output segments: {}", trace.output.len());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn propagator_specs() {
        assert_eq!("identity".parse(), Ok(PropagatorSpec::Identity));
        assert_eq!("oracle".parse(), Ok(PropagatorSpec::Oracle));
        assert_eq!(
            "external:cat -u".parse(),
            Ok(PropagatorSpec::External("cat -u".into()))
        );
        assert!("external:".parse::<PropagatorSpec>().is_err());
        assert!("flow".parse::<PropagatorSpec>().is_err());
        assert_eq!(
            PropagatorSpec::External("x".into()).to_string(),
            "external:x"
        );
    }

    #[test]
    fn row_order_puts_modes_first() {
        assert!(row_order("semi_online") < row_order("mask_iou_baseline"));
        assert!(row_order("mask_iou_baseline") < row_order("custom"));
    }

    #[test]
    fn table_layout() {
        let report = EvalReport {
            windows: vec!["1".into(), "inf".into()],
            rows: vec![EvalRow {
                name: "semi_online".into(),
                mean: None,
                videos: BTreeMap::new(),
            }],
        };
        let t = format_table(&report);
        let header = t.lines().next().unwrap();
        assert!(header.contains("VPQ^1") && header.contains("VPQ^inf"));
        assert!(header.contains("VPQbar") && header.contains("STQ"));
        assert!(t.lines().nth(1).unwrap().starts_with("semi_online"));
    }
}
