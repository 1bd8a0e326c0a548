//! Deterministic synthetic scenes and image-model error simulation.
//!
//! A scene is a set of scripted objects moving over a canvas with integer
//! velocities, bouncing off the borders. Objects later in the script list are
//! drawn on top. [`corrupt`] turns a ground-truth frame into the kind of
//! noisy, id-less segmentation an image model would emit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{render_non_overlapping, BinaryMask, ClassId, Segment, SegmentId, Segmentation};
use crate::metrics::TrackedVideo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rect { width: u32, height: u32 },
    Disk { radius: u32 },
}

/// Placement of a shape's center on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub x: i64,
    pub y: i64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Transform {
    pub fn at(x: i64, y: i64) -> Self {
        Transform { x, y, scale: 1.0 }
    }
}

/// Ground-truth trajectory of one object: a shape plus a transform for every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionScript {
    pub object_id: u32,
    pub class: ClassId,
    pub shape: Shape,
    /// First frame the object exists.
    pub birth: usize,
    /// First frame the object no longer exists, if it leaves before the end.
    pub death: Option<usize>,
    pub transforms: Vec<Transform>,
}

impl MotionScript {
    pub fn alive(&self, frame: usize) -> bool {
        frame >= self.birth && self.death.is_none_or(|d| frame < d) && frame < self.transforms.len()
    }

    /// Unoccluded raster of the shape at `frame`, ignoring whether it is alive.
    pub fn amodal(&self, width: u32, height: u32, frame: usize) -> BinaryMask {
        let t = self.transforms[frame];
        rasterize(self.shape, t, width, height)
    }

    /// Maps a mask drawn on `from` to where this object's motion carries it on `to`.
    pub fn warp(&self, mask: &BinaryMask, from: usize, to: usize) -> BinaryMask {
        let (a, b) = (self.transforms[from], self.transforms[to]);
        if a.scale == b.scale {
            return mask.translate(b.x - a.x, b.y - a.y);
        }
        let (w, h) = (mask.width(), mask.height());
        let src = mask.to_bitmap();
        let ratio = a.scale / b.scale;
        let mut out = vec![false; src.len()];
        for qy in 0..h as i64 {
            for qx in 0..w as i64 {
                let px = (a.x as f64 + (qx - b.x) as f64 * ratio).round() as i64;
                let py = (a.y as f64 + (qy - b.y) as f64 * ratio).round() as i64;
                if px >= 0 && py >= 0 && px < w as i64 && py < h as i64 {
                    out[(qy * w as i64 + qx) as usize] = src[(py * w as i64 + px) as usize];
                }
            }
        }
        BinaryMask::from_bitmap(w, h, &out).expect("bitmap sized from mask")
    }
}

fn rasterize(shape: Shape, t: Transform, width: u32, height: u32) -> BinaryMask {
    match shape {
        Shape::Rect {
            width: sw,
            height: sh,
        } => {
            let sw = ((sw as f64) * t.scale).round() as i64;
            let sh = ((sh as f64) * t.scale).round() as i64;
            let x0 = t.x - sw / 2;
            let y0 = t.y - sh / 2;
            BinaryMask::rect(width, height, x0, y0, x0 + sw, y0 + sh)
        }
        Shape::Disk { radius } => {
            let r = radius as f64 * t.scale;
            let r2 = r * r;
            let ri = r.ceil() as i64;
            let mut intervals = Vec::new();
            for y in (t.y - ri).max(0)..(t.y + ri + 1).min(height as i64) {
                let dy = (y - t.y) as f64;
                let xs: Vec<i64> = ((t.x - ri).max(0)..(t.x + ri + 1).min(width as i64))
                    .filter(|&x| {
                        let dx = (x - t.x) as f64;
                        dx * dx + dy * dy <= r2
                    })
                    .collect();
                if let (Some(&first), Some(&last)) = (xs.first(), xs.last()) {
                    let base = y as u32 * width;
                    intervals.push((base + first as u32, base + last as u32 + 1));
                }
            }
            BinaryMask::from_intervals(width, height, &intervals)
        }
    }
}

fn half_extent(shape: Shape) -> (i64, i64, i64, i64) {
    // (left, top, right, bottom) offsets from the center that the raster touches
    match shape {
        Shape::Rect { width, height } => {
            let (w, h) = (width as i64, height as i64);
            (w / 2, h / 2, w - w / 2 - 1, h - h / 2 - 1)
        }
        Shape::Disk { radius } => {
            let r = radius as i64;
            (r, r, r, r)
        }
    }
}

/// A rendered scene: canvas, length and the scripts that drive it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub length: usize,
    pub scripts: Vec<MotionScript>,
}

impl Scene {
    pub fn script(&self, object_id: u32) -> Option<&MotionScript> {
        self.scripts.iter().find(|s| s.object_id == object_id)
    }

    /// Visible mask of every alive object on `frame`, in script order.
    pub fn visible_masks(&self, frame: usize) -> Vec<(u32, BinaryMask)> {
        let mut covered = BinaryMask::empty(self.width, self.height);
        let mut out = Vec::new();
        for s in self.scripts.iter().rev() {
            if !s.alive(frame) {
                continue;
            }
            let amodal = s.amodal(self.width, self.height, frame);
            let visible = amodal.difference(&covered).expect("same canvas");
            covered = covered.union(&amodal).expect("same canvas");
            out.push((s.object_id, visible));
        }
        out.reverse();
        out
    }

    pub fn ground_truth_frame(&self, frame: usize) -> Segmentation {
        let segments = self
            .visible_masks(frame)
            .into_iter()
            .filter(|(_, m)| !m.is_empty())
            .map(|(id, m)| {
                let class = self.script(id).map(|s| s.class).expect("script exists");
                Segment::new(SegmentId(id), m).with_class(class)
            })
            .collect();
        Segmentation::new(frame, self.width, self.height, segments)
            .expect("visible masks are disjoint by construction")
    }

    pub fn ground_truth(&self) -> TrackedVideo {
        TrackedVideo::new(
            (0..self.length)
                .map(|t| self.ground_truth_frame(t))
                .collect(),
        )
        .expect("frames share the canvas")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Rectangles,
    Disks,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub objects: usize,
    pub shapes: ShapeFamily,
    /// Inclusive range of shape extents (rect side or disk diameter) in pixels.
    pub size_min: u32,
    pub size_max: u32,
    /// Inclusive range of per-axis speed in pixels per frame.
    pub speed_min: i64,
    pub speed_max: i64,
    /// Fraction of objects born after the first frame.
    pub late_birth_fraction: f64,
    /// Fraction of objects that leave before the last frame.
    pub exit_fraction: f64,
    pub classes: u32,
    pub length: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 128,
            height: 96,
            objects: 4,
            shapes: ShapeFamily::Mixed,
            size_min: 18,
            size_max: 30,
            speed_min: 1,
            speed_max: 4,
            late_birth_fraction: 0.25,
            exit_fraction: 0.0,
            classes: 5,
            length: 60,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.late_birth_fraction, self.exit_fraction];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("scene fractions must lie in [0, 1]".into()));
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(Error::Config(format!(
                "size range [{}, {}] is empty",
                self.size_min, self.size_max
            )));
        }
        if self.speed_min < 0 || self.speed_min > self.speed_max {
            return Err(Error::Config(format!(
                "speed range [{}, {}] is empty",
                self.speed_min, self.speed_max
            )));
        }
        if self.length == 0 || self.classes == 0 {
            return Err(Error::Config("length and classes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Probability that a segment is missing from a frame.
    pub dropout: f64,
    /// Expected number of spurious segments per frame.
    pub spurious_rate: f64,
    /// Maximum radius of the random dilation or erosion applied to each segment.
    pub jitter: u32,
    pub split: f64,
    pub class_flip: f64,
    /// Category range used for flips and spurious labels.
    pub classes: u32,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            dropout: 0.0,
            spurious_rate: 0.0,
            jitter: 0,
            split: 0.0,
            class_flip: 0.0,
            classes: 5,
        }
    }
}

impl NoiseConfig {
    /// The benchmark profile used for the temporal-scheme comparison.
    pub fn table6() -> Self {
        NoiseConfig {
            dropout: 0.2,
            spurious_rate: 0.3,
            jitter: 2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.dropout, self.split, self.class_flip];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(
                "noise probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.spurious_rate.is_nan() || self.spurious_rate < 0.0 {
            return Err(Error::Config("spurious rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// Derives an independent stream seed for a `(seed, a, b)` triple.
pub fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ a) ^ b.rotate_left(17))
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 0x5c3e, 0));
    let mut scripts = Vec::with_capacity(cfg.objects);
    let late = (cfg.objects as f64 * cfg.late_birth_fraction).round() as usize;
    let exiting = (cfg.objects as f64 * cfg.exit_fraction).round() as usize;
    for k in 0..cfg.objects {
        let size = rng.gen_range(cfg.size_min..=cfg.size_max);
        let disk = match cfg.shapes {
            ShapeFamily::Rectangles => false,
            ShapeFamily::Disks => true,
            ShapeFamily::Mixed => rng.gen_bool(0.5),
        };
        let shape = if disk {
            Shape::Disk { radius: size / 2 }
        } else {
            let other = rng.gen_range(cfg.size_min..=cfg.size_max);
            Shape::Rect {
                width: size,
                height: other,
            }
        };
        let (l, t, r, b) = half_extent(shape);
        let (xmin, xmax) = (l, cfg.width as i64 - 1 - r);
        let (ymin, ymax) = (t, cfg.height as i64 - 1 - b);
        if xmin > xmax || ymin > ymax {
            return Err(Error::Placement(format!(
                "object {} with shape {:?} does not fit a {}x{} canvas",
                k + 1,
                shape,
                cfg.width,
                cfg.height
            )));
        }
        // late-born objects are the last ones in the list, so they draw on top
        let birth = if k >= cfg.objects - late && cfg.length > 2 {
            rng.gen_range(1..cfg.length - 1)
        } else {
            0
        };
        let death = if k < exiting && cfg.length > birth + 2 {
            Some(rng.gen_range(birth + 2..cfg.length))
        } else {
            None
        };
        let mut speed = || {
            let v = rng.gen_range(cfg.speed_min..=cfg.speed_max);
            if rng.gen_bool(0.5) {
                -v
            } else {
                v
            }
        };
        let (mut vx, mut vy) = (speed(), speed());
        let mut x = rng.gen_range(xmin..=xmax);
        let mut y = rng.gen_range(ymin..=ymax);
        let mut transforms = vec![Transform::at(x, y); cfg.length];
        for slot in transforms.iter_mut().skip(birth + 1) {
            step_bounce(&mut x, &mut vx, xmin, xmax);
            step_bounce(&mut y, &mut vy, ymin, ymax);
            *slot = Transform::at(x, y);
        }
        scripts.push(MotionScript {
            object_id: k as u32 + 1,
            class: ClassId(rng.gen_range(1..=cfg.classes)),
            shape,
            birth,
            death,
            transforms,
        });
    }
    Ok(Scene {
        width: cfg.width,
        height: cfg.height,
        length: cfg.length,
        scripts,
    })
}

fn step_bounce(pos: &mut i64, vel: &mut i64, lo: i64, hi: i64) {
    let mut next = *pos + *vel;
    if next < lo {
        next = 2 * lo - next;
        *vel = -*vel;
    } else if next > hi {
        next = 2 * hi - next;
        *vel = -*vel;
    }
    *pos = next.clamp(lo, hi);
}

/// Simulates image-model errors on one ground-truth frame. Output ids are
/// reassigned `1..` in random order so they carry no tracking information.
pub fn corrupt(gt: &Segmentation, noise: &NoiseConfig, seed: u64, frame: usize) -> Segmentation {
    let (w, h) = (gt.width(), gt.height());
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0xc0ff, frame as u64));
    let mut pieces: Vec<(BinaryMask, Option<ClassId>)> = Vec::new();
    for s in gt.segments() {
        if rng.gen_bool(noise.dropout) {
            continue;
        }
        let mut mask = s.mask.clone();
        if noise.jitter > 0 {
            let r = rng.gen_range(-(noise.jitter as i64)..=noise.jitter as i64);
            mask = morph(&mask, r);
        }
        let mut class = s.class_label;
        if noise.classes > 1 && rng.gen_bool(noise.class_flip) {
            let current = class.map_or(0, |c| c.0);
            let mut c = rng.gen_range(1..=noise.classes);
            while c == current {
                c = rng.gen_range(1..=noise.classes);
            }
            class = Some(ClassId(c));
        }
        if rng.gen_bool(noise.split) {
            if let Some((left, right)) = split_vertical(&mask) {
                pieces.push((left, class));
                pieces.push((right, class));
                continue;
            }
        }
        if !mask.is_empty() {
            pieces.push((mask, class));
        }
    }

    let mut spurious = noise.spurious_rate.floor() as usize;
    if rng.gen_bool(noise.spurious_rate.fract()) {
        spurious += 1;
    }
    let mut occupied = pieces.iter().fold(BinaryMask::empty(w, h), |acc, (m, _)| {
        acc.union(m).expect("same canvas")
    });
    for _ in 0..spurious {
        for _attempt in 0..32 {
            let sw = rng.gen_range(3..=8i64);
            let sh = rng.gen_range(3..=8i64);
            if sw > w as i64 || sh > h as i64 {
                break;
            }
            let x = rng.gen_range(0..=w as i64 - sw);
            let y = rng.gen_range(0..=h as i64 - sh);
            let m = BinaryMask::rect(w, h, x, y, x + sw, y + sh);
            if m.intersection_area(&occupied).expect("same canvas") == 0 {
                occupied = occupied.union(&m).expect("same canvas");
                let class = (noise.classes > 0).then(|| ClassId(rng.gen_range(1..=noise.classes)));
                pieces.push((m, class));
                break;
            }
        }
    }

    let mut ids: Vec<u32> = (1..=pieces.len() as u32).collect();
    ids.shuffle(&mut rng);
    let segments = pieces
        .into_iter()
        .zip(ids)
        .map(|((m, class), id)| {
            let mut s = Segment::new(SegmentId(id), m).with_confidence(rng.gen_range(0.5..=1.0));
            s.class_label = class;
            s
        })
        .collect();
    render_non_overlapping(gt.frame(), w, h, segments).expect("segments built on the gt canvas")
}

/// Dilates (`radius > 0`) or erodes (`radius < 0`) with a square structuring element.
pub fn morph(mask: &BinaryMask, radius: i64) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let dilate = radius > 0;
    let r = radius.unsigned_abs() as usize;
    let src = mask.to_bitmap();
    // erosion treats off-canvas pixels as background
    let pass = |input: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; input.len()];
        for y in 0..h {
            for x in 0..w {
                let (c, n) = if horizontal { (x, w) } else { (y, h) };
                let lo = c.saturating_sub(r);
                let hi = (c + r).min(n - 1);
                let touches_edge = c < r || c + r > n - 1;
                let mut acc = !dilate;
                for k in lo..=hi {
                    let v = if horizontal {
                        input[y * w + k]
                    } else {
                        input[k * w + x]
                    };
                    if dilate {
                        acc |= v;
                    } else {
                        acc &= v;
                    }
                }
                if !dilate && touches_edge {
                    acc = false;
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    let out = pass(&pass(&src, true), false);
    BinaryMask::from_bitmap(mask.width(), mask.height(), &out).expect("same size")
}

fn split_vertical(mask: &BinaryMask) -> Option<(BinaryMask, BinaryMask)> {
    let (x0, y0, x1, y1) = mask.bbox()?;
    let mid = (x0 + x1) as i64 / 2;
    let (w, h) = (mask.width(), mask.height());
    let left = mask
        .intersection(&BinaryMask::rect(
            w, h, x0 as i64, y0 as i64, mid, y1 as i64,
        ))
        .ok()?;
    let right = mask.difference(&left).ok()?;
    (!left.is_empty() && !right.is_empty()).then_some((left, right))
}
