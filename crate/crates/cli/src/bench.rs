//! In-memory benchmark runs over synthesized videos.

use std::collections::BTreeMap;
use std::sync::Arc;

use deva_fuse::metrics::{evaluate, MetricOptions, MetricReport, TrackedVideo, Window};
use deva_fuse::pipeline::PipelineConfig;
use deva_fuse::{SegmentId, Segmentation};
use rayon::prelude::*;

use crate::bundle::SynthVideo;
use crate::commands::{run_video, PropagatorSpec};
use crate::error::CliResult;

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub mean: MetricReport,
    pub per_video: Vec<MetricReport>,
    pub outputs: Vec<Vec<Segmentation>>,
}

/// Runs one configuration over every video and averages the metrics.
pub fn run_benchmark(
    videos: &[SynthVideo],
    cfg: &PipelineConfig,
    propagator: &PropagatorSpec,
    windows: &[Window],
) -> CliResult<BenchRun> {
    let results: Vec<CliResult<(MetricReport, Vec<Segmentation>)>> = videos
        .par_iter()
        .map(|v| {
            let mut prop = propagator.build(Some(Arc::new(v.scene.clone())))?;
            let out = run_video(v.proposals.clone(), prop.as_mut(), cfg)?;
            let pred = TrackedVideo::new(out.frames)?;
            let gt = TrackedVideo::new(v.gt.clone())?;
            let report = evaluate(&pred, &gt, windows, &MetricOptions::default())?;
            Ok((report, pred.frames().to_vec()))
        })
        .collect();
    let mut per_video = Vec::new();
    let mut outputs = Vec::new();
    for r in results {
        let (report, frames) = r?;
        per_video.push(report);
        outputs.push(frames);
    }
    let mean = MetricReport::mean(&per_video).expect("at least one video");
    Ok(BenchRun {
        mean,
        per_video,
        outputs,
    })
}

/// Tracks that exist on exactly one frame and do not match any ground-truth
/// segment there (IoU at most 0.5), per output frame.
pub fn spurious_one_frame_rate(outputs: &[Vec<Segmentation>], gt: &[Vec<Segmentation>]) -> f64 {
    let mut count = 0usize;
    let mut frames = 0usize;
    for (pred, truth) in outputs.iter().zip(gt) {
        frames += pred.len();
        let mut lifetimes: BTreeMap<SegmentId, Vec<usize>> = BTreeMap::new();
        for (t, f) in pred.iter().enumerate() {
            for s in f.segments() {
                lifetimes.entry(s.id).or_default().push(t);
            }
        }
        for (id, ts) in lifetimes {
            if ts.len() != 1 {
                continue;
            }
            let t = ts[0];
            let seg = pred[t].get(id).expect("segment present");
            let matched = truth[t]
                .segments()
                .iter()
                .any(|g| g.mask.iou(&seg.mask).unwrap_or(0.0) > 0.5);
            if !matched {
                count += 1;
            }
        }
    }
    if frames == 0 {
        0.0
    } else {
        count as f64 / frames as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use deva_fuse::{BinaryMask, Segment};

    fn frame(t: usize, segs: &[(u32, i64)]) -> Segmentation {
        let segments = segs
            .iter()
            .map(|&(id, x)| Segment::new(SegmentId(id), BinaryMask::rect(16, 4, x, 0, x + 2, 2)))
            .collect();
        Segmentation::new(t, 16, 4, segments).unwrap()
    }

    #[test]
    fn counts_unmatched_single_frame_tracks() {
        let gt = vec![vec![frame(0, &[(1, 0)]), frame(1, &[(1, 0)])]];
        // id 5 is a one-frame false positive, id 6 a one-frame true positive
        let pred = vec![vec![frame(0, &[(5, 8)]), frame(1, &[(6, 0)])]];
        assert_eq!(spurious_one_frame_rate(&pred, &gt), 0.5);
        let steady = vec![vec![frame(0, &[(2, 8)]), frame(1, &[(2, 8)])]];
        assert_eq!(spurious_one_frame_rate(&steady, &gt), 0.0);
    }
}
