//! Synthetic benchmark bundles and video inventories on disk.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<video>/video.json
//! <root>/<video>/scene.json
//! <root>/<video>/gt/00000.png, 00000.json, ...
//! <root>/<video>/proposals/00000.png, 00000.json, ...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use deva_fuse::synth::{corrupt, generate_scene, stream_seed, NoiseConfig, Scene, SceneConfig};
use deva_fuse::Segmentation;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{infer_frame_count, read_json, write_frames, write_json};

pub const BUNDLE_FORMAT: &str = "deva-fuse-bundle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub videos: Vec<String>,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub name: String,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub scene_seed: u64,
    pub noise_seed: u64,
}

/// One synthesized video held in memory.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub info: VideoInfo,
    pub scene: Scene,
    pub gt: Vec<Segmentation>,
    pub proposals: Vec<Segmentation>,
}

pub fn video_name(index: usize) -> String {
    format!("video_{index:03}")
}

pub fn synthesize_video(
    scene: &SceneConfig,
    noise: &NoiseConfig,
    seed: u64,
    index: usize,
) -> CliResult<SynthVideo> {
    let scene_seed = stream_seed(seed, 0x5ce4e, index as u64);
    let noise_seed = stream_seed(seed, 0x4015e, index as u64);
    let scene = generate_scene(&SceneConfig {
        seed: scene_seed,
        ..scene.clone()
    })?;
    let gt = scene.ground_truth().frames().to_vec();
    let proposals = gt
        .iter()
        .enumerate()
        .map(|(t, f)| corrupt(f, noise, noise_seed, t))
        .collect();
    Ok(SynthVideo {
        info: VideoInfo {
            name: video_name(index),
            frames: scene.length,
            width: scene.width,
            height: scene.height,
            scene_seed,
            noise_seed,
        },
        scene,
        gt,
        proposals,
    })
}

/// Synthesizes `cfg.synth.videos` videos in parallel, in index order.
pub fn synthesize(cfg: &Config) -> CliResult<Vec<SynthVideo>> {
    cfg.noise.validate()?;
    (0..cfg.synth.videos)
        .into_par_iter()
        .map(|i| synthesize_video(&cfg.scene, &cfg.noise, cfg.synth.seed, i))
        .collect()
}

pub fn write_bundle(root: &Path, cfg: &Config, videos: &[SynthVideo]) -> CliResult<()> {
    videos.par_iter().try_for_each(|v| -> CliResult<()> {
        let dir = root.join(&v.info.name);
        write_json(&dir.join("video.json"), &v.info)?;
        write_json(&dir.join("scene.json"), &v.scene)?;
        write_frames(&dir.join("gt"), &v.gt)?;
        write_frames(&dir.join("proposals"), &v.proposals)
    })?;
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        version: 1,
        seed: cfg.synth.seed,
        videos: videos.iter().map(|v| v.info.name.clone()).collect(),
        scene: cfg.scene.clone(),
        noise: cfg.noise.clone(),
    };
    write_json(&root.join("manifest.json"), &manifest)
}

/// Video names under `root`: from `manifest.json` when present, otherwise
/// every subdirectory in name order.
pub fn list_videos(root: &Path) -> CliResult<Vec<String>> {
    let manifest = root.join("manifest.json");
    if manifest.is_file() {
        let m: BundleManifest = read_json(&manifest)?;
        return Ok(m.videos);
    }
    subdirectories(root)
}

pub fn subdirectories(root: &Path) -> CliResult<Vec<String>> {
    let entries = fs::read_dir(root).map_err(|e| CliError::io(root, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(root, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// `<root>/<video>/<sub>` if that directory exists, else `<root>/<video>`.
pub fn frames_dir(root: &Path, video: &str, sub: &str) -> PathBuf {
    let nested = root.join(video).join(sub);
    if nested.is_dir() {
        nested
    } else {
        root.join(video)
    }
}

/// Frame count from `video.json` when present, otherwise from the files.
pub fn frame_count(root: &Path, video: &str, frames: &Path) -> CliResult<usize> {
    let info = root.join(video).join("video.json");
    if info.is_file() {
        let info: VideoInfo = read_json(&info)?;
        return Ok(info.frames);
    }
    infer_frame_count(frames)
}

pub fn read_scene(root: &Path, video: &str) -> CliResult<Scene> {
    let path = root.join(video).join("scene.json");
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "the oracle propagator needs motion scripts at {}",
            path.display()
        )));
    }
    read_json(&path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        let mut cfg = Config::default();
        cfg.synth.videos = 2;
        cfg.scene.length = 6;
        cfg
    }

    #[test]
    fn bundle_layout_and_inventory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let videos = synthesize(&cfg).unwrap();
        write_bundle(dir.path(), &cfg, &videos).unwrap();
        assert_eq!(
            list_videos(dir.path()).unwrap(),
            vec!["video_000", "video_001"]
        );
        let gt = frames_dir(dir.path(), "video_001", "gt");
        assert!(gt.ends_with("video_001/gt"));
        assert_eq!(frame_count(dir.path(), "video_001", &gt).unwrap(), 6);
        assert_eq!(
            read_scene(dir.path(), "video_001").unwrap(),
            videos[1].scene
        );
    }

    #[test]
    fn seeds_differ_per_video() {
        let videos = synthesize(&small()).unwrap();
        assert_ne!(videos[0].info.scene_seed, videos[1].info.scene_seed);
        assert_ne!(videos[0].scene, videos[1].scene);
    }
}
