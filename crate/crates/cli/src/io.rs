//! Frame interchange: 16-bit grayscale PNG id-maps plus a sidecar JSON file
//! holding per-segment class and confidence.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use deva_fuse::{BinaryMask, ClassId, Segment, SegmentId, Segmentation};
use image::codecs::png::PngEncoder;
use image::ImageEncoder;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Optional row-major run lengths; when present they must agree with the PNG.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rle: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub frame: usize,
    pub width: u32,
    pub height: u32,
    pub segments: BTreeMap<u32, SidecarEntry>,
}

pub fn frame_stem(frame: usize) -> String {
    format!("{frame:05}")
}

pub fn png_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("{}.png", frame_stem(frame)))
}

pub fn sidecar_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("{}.json", frame_stem(frame)))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Parses JSON, reporting the line and column of syntax errors.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::malformed(path, e))
}

pub fn write_frame(dir: &Path, seg: &Segmentation) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let (w, h) = (seg.width(), seg.height());
    let path = png_path(dir, seg.frame());
    let pixels: Vec<u16> = seg
        .id_map()
        .into_iter()
        .map(|id| {
            u16::try_from(id).map_err(|_| {
                CliError::malformed(
                    &path,
                    format!("segment id {id} does not fit a 16-bit id map"),
                )
            })
        })
        .collect::<CliResult<_>>()?;
    // the encoder takes native-endian samples
    let raw: Vec<u8> = pixels.iter().flat_map(|v| v.to_ne_bytes()).collect();
    let mut bytes = Vec::new();
    PngEncoder::new(&mut bytes)
        .write_image(&raw, w, h, image::ExtendedColorType::L16)
        .map_err(|e| CliError::malformed(&path, e))?;
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;

    let sidecar = Sidecar {
        frame: seg.frame(),
        width: w,
        height: h,
        segments: seg
            .segments()
            .iter()
            .map(|s| {
                (
                    s.id.0,
                    SidecarEntry {
                        class: s.class_label.map(|c| c.0),
                        confidence: s.confidence,
                        rle: None,
                    },
                )
            })
            .collect(),
    };
    write_json(&sidecar_path(dir, seg.frame()), &sidecar)
}

/// Reads frame `frame` of `video` from `dir`. A missing PNG is reported as a
/// missing frame; a missing sidecar means no class or confidence information.
pub fn read_frame(dir: &Path, video: &str, frame: usize) -> CliResult<Segmentation> {
    let path = png_path(dir, frame);
    if !path.is_file() {
        return Err(CliError::MissingFrame {
            video: video.to_string(),
            frame,
            path,
        });
    }
    let img = image::open(&path).map_err(|e| CliError::malformed(&path, e))?;
    let (w, h) = (img.width(), img.height());
    let map: Vec<u32> = match img {
        image::DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(u32::from).collect()
        }
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(CliError::malformed(
                &path,
                format!("expected a grayscale id map, found {:?}", other.color()),
            ))
        }
    };
    let seg = Segmentation::from_id_map(frame, w, h, &map)?;

    let side = sidecar_path(dir, frame);
    if !side.is_file() {
        return Ok(seg);
    }
    let sidecar: Sidecar = read_json(&side)?;
    if (sidecar.width, sidecar.height) != (w, h) {
        return Err(CliError::malformed(
            &side,
            format!(
                "sidecar is {}x{} but the id map is {w}x{h}",
                sidecar.width, sidecar.height
            ),
        ));
    }
    let mut segments: Vec<Segment> = seg.into_segments();
    for (&id, entry) in &sidecar.segments {
        let Some(s) = segments.iter_mut().find(|s| s.id == SegmentId(id)) else {
            return Err(CliError::malformed(
                &side,
                format!("segment {id} is listed but absent from the id map"),
            ));
        };
        if let Some(runs) = &entry.rle {
            let m = BinaryMask::from_runs(w, h, runs.clone())
                .map_err(|e| CliError::malformed(&side, format!("segment {id}: {e}")))?;
            if m != s.mask {
                return Err(CliError::malformed(
                    &side,
                    format!("segment {id}: run lengths disagree with the id map"),
                ));
            }
        }
        s.class_label = entry.class.map(ClassId);
        s.confidence = entry.confidence;
    }
    Ok(Segmentation::new(frame, w, h, segments)?)
}

/// Number of frames implied by the PNG files in `dir` (highest index + 1).
pub fn infer_frame_count(dir: &Path) -> CliResult<usize> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut count = 0;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".png") {
            if let Ok(idx) = stem.parse::<usize>() {
                count = count.max(idx + 1);
            }
        }
    }
    Ok(count)
}

pub fn read_frames(dir: &Path, video: &str, frames: usize) -> CliResult<Vec<Segmentation>> {
    (0..frames).map(|t| read_frame(dir, video, t)).collect()
}

pub fn write_frames(dir: &Path, frames: &[Segmentation]) -> CliResult<()> {
    frames.iter().try_for_each(|f| write_frame(dir, f))
}
