//! Deterministic moving-shapes video renderer with domain attributes.
//!
//! Every object is a filled circle, square or triangle of a category colour
//! moving with constant velocity plus a small per-frame jitter. Objects stay
//! inside the frame for the whole sequence and never overlap. Domain effects
//! are applied after rendering, in this order: fog blend towards mid-grey,
//! brightness scaling, additive Gaussian noise, then 8-bit quantisation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::geometry::BoundingBox;
use crate::rng::CounterRng;
use crate::tensor::Tensor3;
use crate::{Error, Result};

pub const CATEGORY_NAMES: [&str; 3] = ["circle", "square", "triangle"];

/// Base RGB colour per category; each object perturbs it slightly.
pub const CATEGORY_COLORS: [[f64; 3]; 3] = [[0.85, 0.2, 0.2], [0.2, 0.8, 0.25], [0.2, 0.3, 0.9]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Circle = 0,
    Square = 1,
    Triangle = 2,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Circle, Category::Square, Category::Triangle];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        CATEGORY_NAMES[self.id()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeOfDay {
    Day,
    Night,
}

impl TimeOfDay {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Day => "day",
            Self::Night => "night",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "day" => Some(Self::Day),
            "night" => Some(Self::Night),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConfig {
    pub time_of_day: TimeOfDay,
    pub fog_alpha: f64,
    /// Horizontal offset of the crop window inside the rendered canvas.
    pub camera_shift_px: usize,
    pub brightness_scale: f64,
    pub noise_sigma: f64,
}

impl DomainConfig {
    pub fn day() -> Self {
        Self { time_of_day: TimeOfDay::Day, fog_alpha: 0.0, camera_shift_px: 0, brightness_scale: 1.0, noise_sigma: 0.0 }
    }

    pub fn night() -> Self {
        Self { time_of_day: TimeOfDay::Night, brightness_scale: 0.3, noise_sigma: 0.02, ..Self::day() }
    }

    pub fn fog() -> Self {
        Self { fog_alpha: 0.5, ..Self::day() }
    }

    pub fn camera_shift() -> Self {
        Self { camera_shift_px: 16, ..Self::day() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.fog_alpha) || !unit(self.brightness_scale) {
            return Err(Error::contract("fog_alpha and brightness_scale must lie in [0, 1]"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::contract("noise_sigma must be finite and non-negative"));
        }
        if self.time_of_day == TimeOfDay::Night && self.brightness_scale > 0.5 {
            return Err(Error::contract("night domains need brightness_scale <= 0.5"));
        }
        Ok(())
    }

    /// Derived categorical attributes: `time_of_day`, `weather`, `camera`.
    pub fn attribute(&self, key: &str) -> Option<&'static str> {
        match key {
            "time_of_day" => Some(self.time_of_day.as_str()),
            "weather" => Some(if self.fog_alpha > 0.0 { "fog" } else { "clear" }),
            "camera" => Some(if self.camera_shift_px > 0 { "shifted" } else { "front" }),
            _ => None,
        }
    }
}

pub const ATTRIBUTES: [&str; 3] = ["time_of_day", "weather", "camera"];

/// Scene statistics shared by every sequence of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Side of the object's bounding square in pixels.
    pub min_size: f64,
    pub max_size: f64,
    /// Per-axis speed bound in pixels per frame.
    pub max_speed: f64,
    /// Per-frame positional jitter bound in pixels.
    pub jitter: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            min_frames: 8,
            max_frames: 40,
            min_objects: 1,
            max_objects: 8,
            min_size: 14.0,
            max_size: 40.0,
            max_speed: 1.5,
            jitter: 0.5,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::contract("frames must be at least 16x16"));
        }
        if self.min_frames < 2 || self.max_frames < self.min_frames {
            return Err(Error::contract("sequences need at least 2 frames and min_frames <= max_frames"));
        }
        if self.min_objects == 0 || self.max_objects < self.min_objects {
            return Err(Error::contract("need 1 <= min_objects <= max_objects"));
        }
        let fits = self.max_size + 2.0 * self.jitter < self.width.min(self.height) as f64;
        if !(self.min_size >= 4.0 && self.max_size >= self.min_size && fits) {
            return Err(Error::contract("object size range does not fit the frame"));
        }
        if !(self.max_speed >= 0.0 && self.jitter >= 0.0) {
            return Err(Error::contract("speed and jitter bounds must be non-negative"));
        }
        Ok(())
    }
}

/// One moving object; positions are box centres in output-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectTrack {
    pub category: Category,
    pub size: f64,
    pub start: (f64, f64),
    pub velocity: (f64, f64),
    pub color: [f64; 3],
}

impl ObjectTrack {
    fn center_without_jitter(&self, t: usize) -> (f64, f64) {
        (self.start.0 + self.velocity.0 * t as f64, self.start.1 + self.velocity.1 * t as f64)
    }

    fn box_at(&self, center: (f64, f64)) -> BoundingBox {
        let h = 0.5 * self.size;
        BoundingBox::new(center.0 - h, center.1 - h, center.0 + h, center.1 + h).with_category(self.category.id())
    }
}

/// 8-bit RGB frame, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Frame {
    pub fn from_rgb(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::contract(format!("{width}x{height} RGB frame needs {} bytes, got {}", width * height * 3, rgb.len())));
        }
        Ok(Self { width, height, rgb })
    }

    /// CHW tensor with values in [0, 1].
    pub fn to_tensor(&self) -> Tensor3<f32> {
        let plane = self.width * self.height;
        let mut data = vec![0.0f32; 3 * plane];
        for (i, px) in self.rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        Tensor3 { c: 3, h: self.height, w: self.width, data }
    }

    pub fn mean_intensity(&self) -> f64 {
        self.rgb.iter().map(|&v| v as f64).sum::<f64>() / (255.0 * self.rgb.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub index: usize,
    /// Tight boxes with zero-based categories set.
    pub boxes: Vec<BoundingBox>,
}

impl FrameAnnotation {
    pub fn categories(&self) -> Vec<usize> {
        self.boxes.iter().map(|b| b.category.unwrap_or(0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub sequence_id: String,
    pub domain: DomainConfig,
    pub seed: u64,
    pub frames: Vec<Frame>,
    pub annotations: Vec<FrameAnnotation>,
}

fn boxes_clear(a: &BoundingBox, b: &BoundingBox, gap: f64) -> bool {
    a.x2 + gap <= b.x1 || b.x2 + gap <= a.x1 || a.y2 + gap <= b.y1 || b.y2 + gap <= a.y1
}

/// Samples tracks that stay inside the frame and keep apart for `num_frames`.
pub fn sample_tracks(scene: &SceneConfig, num_frames: usize, rng: &mut CounterRng) -> Vec<ObjectTrack> {
    let target = scene.min_objects + rng.below(scene.max_objects - scene.min_objects + 1);
    let (w, h) = (scene.width as f64, scene.height as f64);
    let last = num_frames.saturating_sub(1);
    let margin = scene.jitter + 1.0;
    let mut tracks: Vec<ObjectTrack> = Vec::with_capacity(target);
    let mut attempts = 0;
    while tracks.len() < target && attempts < 400 {
        attempts += 1;
        let category = Category::ALL[rng.below(3)];
        let size = rng.uniform(scene.min_size, scene.max_size);
        let lo = 0.5 * size + margin;
        let (xmax, ymax) = (w - lo, h - lo);
        let start = (rng.uniform(lo, xmax), rng.uniform(lo, ymax));
        let velocity = (rng.uniform(-scene.max_speed, scene.max_speed), rng.uniform(-scene.max_speed, scene.max_speed));
        let base = CATEGORY_COLORS[category.id()];
        let color = [0, 1, 2].map(|c| (base[c] + rng.uniform(-0.08, 0.08)).clamp(0.0, 1.0));
        let track = ObjectTrack { category, size, start, velocity, color };
        let end = track.center_without_jitter(last);
        if end.0 < lo || end.0 > xmax || end.1 < lo || end.1 > ymax {
            continue;
        }
        let apart = tracks.iter().all(|o| {
            (0..num_frames).all(|t| {
                let a = track.box_at(track.center_without_jitter(t));
                let b = o.box_at(o.center_without_jitter(t));
                boxes_clear(&a, &b, 2.0 * scene.jitter + 2.0)
            })
        });
        if apart {
            tracks.push(track);
        }
    }
    if tracks.is_empty() {
        // a lone static object always fits
        let size = scene.min_size;
        tracks.push(ObjectTrack {
            category: Category::Square,
            size,
            start: (0.5 * w, 0.5 * h),
            velocity: (0.0, 0.0),
            color: CATEGORY_COLORS[1],
        });
    }
    tracks
}

/// Background of an `h × w` output window whose left edge sits at canvas
/// column `shift`: a slow sinusoidal texture around mid-grey, a horizontal
/// ramp across the canvas and a faint blue tint. Row-major, 3 values per pixel.
fn background(w: usize, h: usize, shift: usize, phase: [f64; 2]) -> Vec<[f64; 3]> {
    let canvas_w = (w + shift) as f64;
    let xs: Vec<f64> = (0..w).map(|x| x as f64 + 0.5 + shift as f64).collect();
    let sx: Vec<f64> = xs.iter().map(|&x| libm::sin(x * 0.19 + phase[0])).collect();
    let cy: Vec<f64> = (0..h).map(|y| libm::cos((y as f64 + 0.5) * 0.13 + phase[1])).collect();
    let mut out = Vec::with_capacity(w * h);
    for &c in &cy {
        for (x, &s) in xs.iter().zip(&sx) {
            let v = 0.5 + 0.04 * s * c + 0.08 * (x / canvas_w - 0.5);
            out.push([v, v + 0.01, v + 0.02]);
        }
    }
    out
}

fn covers(category: Category, b: &BoundingBox, px: f64, py: f64) -> bool {
    if px < b.x1 || px >= b.x2 || py < b.y1 || py >= b.y2 {
        return false;
    }
    match category {
        Category::Square => true,
        Category::Circle => {
            let (cx, cy) = b.center();
            let r = 0.5 * b.width();
            (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r
        }
        Category::Triangle => {
            // apex at top centre, base along the bottom edge; pixels whose
            // centre lies within half a pixel of the triangle are filled
            let (cx, _) = b.center();
            let depth = (py - b.y1) / b.height();
            let half = 0.5 * b.width() * depth;
            let slack = 0.5 * libm::sqrt(1.0 + (0.5 * b.width() / b.height()).powi(2));
            (px - cx).abs() <= half + slack
        }
    }
}

/// Renders `tracks` for `num_frames` frames under `domain`.
pub fn render_sequence(
    sequence_id: &str,
    tracks: &[ObjectTrack],
    scene: &SceneConfig,
    domain: &DomainConfig,
    num_frames: usize,
    seed: u64,
) -> Result<Sequence> {
    scene.validate()?;
    domain.validate()?;
    if num_frames < 2 {
        return Err(Error::contract("a sequence needs at least 2 frames"));
    }
    let root = CounterRng::new(seed);
    let mut style = root.derive(1);
    let mut jitter_rng = root.derive(2);
    let mut noise_rng = root.derive(3);
    let phase = [style.uniform(0.0, TAU), style.uniform(0.0, TAU)];
    let (w, h) = (scene.width, scene.height);
    let bg = background(w, h, domain.camera_shift_px, phase);
    let mut frames = Vec::with_capacity(num_frames);
    let mut annotations = Vec::with_capacity(num_frames);
    for t in 0..num_frames {
        let mut boxes = Vec::with_capacity(tracks.len());
        for tr in tracks {
            let (cx, cy) = tr.center_without_jitter(t);
            let (jx, jy) = if scene.jitter > 0.0 {
                (jitter_rng.uniform(-scene.jitter, scene.jitter), jitter_rng.uniform(-scene.jitter, scene.jitter))
            } else {
                (0.0, 0.0)
            };
            boxes.push(tr.box_at((cx + jx, cy + jy)).clip(w as f64, h as f64));
        }
        let mut rgb = vec![0u8; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut col = bg[y * w + x];
                for (tr, b) in tracks.iter().zip(&boxes) {
                    if covers(tr.category, b, px, py) {
                        col = tr.color;
                    }
                }
                for c in 0..3 {
                    let mut v = (1.0 - domain.fog_alpha) * col[c] + domain.fog_alpha * 0.5;
                    v *= domain.brightness_scale;
                    if domain.noise_sigma > 0.0 {
                        v += domain.noise_sigma * noise_rng.normal();
                    }
                    rgb[(y * w + x) * 3 + c] = libm::round(v.clamp(0.0, 1.0) * 255.0) as u8;
                }
            }
        }
        frames.push(Frame { width: w, height: h, rgb });
        annotations.push(FrameAnnotation { index: t, boxes });
    }
    Ok(Sequence { sequence_id: sequence_id.into(), domain: *domain, seed, frames, annotations })
}

/// Samples a frame count and object tracks from `seed`, then renders.
pub fn generate_sequence(sequence_id: &str, scene: &SceneConfig, domain: &DomainConfig, seed: u64) -> Result<Sequence> {
    scene.validate()?;
    let mut rng = CounterRng::new(seed).derive(0);
    let num_frames = scene.min_frames + rng.below(scene.max_frames - scene.min_frames + 1);
    let tracks = sample_tracks(scene, num_frames, &mut rng);
    render_sequence(sequence_id, &tracks, scene, domain, num_frames, seed)
}

/// Index of the dominant colour channel when the pixel is clearly saturated.
pub fn color_class(px: [u8; 3]) -> Option<usize> {
    let (mut best, mut second) = ((0usize, px[0]), 0u8);
    for c in 1..3 {
        if px[c] > best.1 {
            second = best.1;
            best = (c, px[c]);
        } else if px[c] > second {
            second = px[c];
        }
    }
    // night frames are dim, so compare against the pixel's own scale
    (best.1 as f64 >= 1.6 * second as f64 + 4.0).then_some(best.0)
}
