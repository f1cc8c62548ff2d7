//! Generator agent: a seeded procedural renderer standing in for a
//! generative model. `eta` controls how far a render strays from its
//! constraints, which gives the reviewer's retry loop something to catch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{BackgroundSpec, Constraints, ElementSpec, Lexicon, Shape, Subtask};
use crate::raster::{clamp_channel, round_half_up, Image, Rgb};
use crate::rng::{fnv1a64, mix3, SplitMix64};

pub const MIN_CANVAS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("unknown kind '{0}'")]
    UnknownKind(String),
    #[error("subtask '{0}' is a layout subtask and cannot be rendered")]
    LayoutSubtaskNotRenderable(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub canvas_w: usize,
    pub canvas_h: usize,
    /// Infidelity in `[0, 1]`.
    pub eta: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            canvas_w: 512,
            canvas_h: 512,
            eta: 0.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(GenError::InvalidConfig(format!("eta {} outside [0, 1]", self.eta)));
        }
        if self.canvas_w < MIN_CANVAS || self.canvas_h < MIN_CANVAS {
            return Err(GenError::InvalidConfig(format!(
                "canvas {}x{} smaller than {MIN_CANVAS}x{MIN_CANVAS}",
                self.canvas_w, self.canvas_h
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box in canvas fractions, `x1`/`y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl FracRect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

/// Attributes actually rendered, after noise and clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Rendered {
    Element {
        color: Rgb,
        size: f64,
        center: (f64, f64),
        target_px: usize,
    },
    Background {
        top_color: Rgb,
        bottom_color: Rgb,
    },
}

/// One rendered subtask: a sprite with alpha placed at `origin` on the canvas.
/// Backgrounds cover the whole canvas and are fully opaque.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub subtask_id: String,
    pub image: Image,
    pub origin: (usize, usize),
    pub canvas: (usize, usize),
    pub attempt: u32,
    pub seed: u64,
    pub measured_bbox: FracRect,
    pub params_used: Rendered,
}

impl Component {
    pub fn is_background(&self) -> bool {
        matches!(self.params_used, Rendered::Background { .. })
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, subtask: &Subtask, cfg: &GenConfig, attempt: u32) -> Result<Component, GenError>;
}

fn inside_polygon_row(poly: &[[i32; 2]], yc: f64, xs: &mut Vec<f64>) {
    let n = poly.len();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let (py, qy) = (f64::from(p[1]), f64::from(q[1]));
        if (py > yc) != (qy > yc) {
            let (px, qx) = (f64::from(p[0]), f64::from(q[0]));
            xs.push(px + (yc - py) * (qx - px) / (qy - py));
        }
    }
}

/// Scan-converts a kind's glyph into a `target_px` square, sampling pixel
/// centers. Union of shapes; polygons fill even-odd. No anti-aliasing.
pub fn render_glyph(lexicon: &Lexicon, kind: &str, color: Rgb, target_px: usize) -> Result<Image, GenError> {
    let def = lexicon.kind(kind).ok_or_else(|| GenError::UnknownKind(kind.to_owned()))?;
    let px = target_px.max(1);
    let unit = 1000.0 / px as f64;
    let mut alpha = vec![0u8; px * px];
    let mut xs = Vec::new();
    for y in 0..px {
        let yc = (y as f64 + 0.5) * unit;
        let row = &mut alpha[y * px..(y + 1) * px];
        for shape in &def.glyph {
            match shape {
                Shape::Polygon(poly) => {
                    xs.clear();
                    inside_polygon_row(poly, yc, &mut xs);
                    xs.sort_by(f64::total_cmp);
                    for span in xs.chunks_exact(2) {
                        for (x, a) in row.iter_mut().enumerate() {
                            let xc = (x as f64 + 0.5) * unit;
                            if span[0] <= xc && xc < span[1] {
                                *a = 255;
                            }
                        }
                    }
                }
                Shape::Ellipse([cx, cy, rx, ry]) => {
                    let dy = (yc - f64::from(*cy)) / f64::from(*ry);
                    for (x, a) in row.iter_mut().enumerate() {
                        let dx = ((x as f64 + 0.5) * unit - f64::from(*cx)) / f64::from(*rx);
                        if dx * dx + dy * dy <= 1.0 {
                            *a = 255;
                        }
                    }
                }
            }
        }
    }
    if alpha.iter().all(|&a| a == 0) {
        // too small to hit any sample; keep the glyph center
        alpha[(px / 2) * px + px / 2] = 255;
    }
    Image::filled(px, px, color)
        .and_then(|img| img.with_alpha(alpha))
        .map_err(|e| GenError::InvalidConfig(e.to_string()))
}

/// Glyph side length in pixels for a size fraction on a canvas.
pub fn target_px(size: f64, canvas_w: usize, canvas_h: usize) -> usize {
    (round_half_up(size * canvas_w.min(canvas_h) as f64) as usize).max(1)
}

/// A placed element sprite, cropped to its opaque pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pub image: Image,
    pub origin: (usize, usize),
}

/// Renders an element glyph centred at `center` (canvas fractions), keeps it
/// on canvas, and trims transparent margins.
pub fn place_element(
    lexicon: &Lexicon,
    kind: &str,
    color: Rgb,
    size: f64,
    center: (f64, f64),
    canvas: (usize, usize),
) -> Result<Sprite, GenError> {
    let (w, h) = canvas;
    let px = target_px(size, w, h).min(w).min(h);
    let glyph = render_glyph(lexicon, kind, color, px)?;
    let place = |c: f64, extent: usize| -> usize {
        let o = round_half_up(c * extent as f64 - px as f64 / 2.0);
        o.clamp(0.0, (extent - px) as f64) as usize
    };
    let (ox, oy) = (place(center.0, w), place(center.1, h));

    let alpha = glyph.alpha().expect("glyphs carry alpha");
    let (mut x0, mut y0, mut x1, mut y1) = (px, px, 0, 0);
    for y in 0..px {
        for x in 0..px {
            if alpha[y * px + x] > 0 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    let (cw, ch) = (x1 - x0, y1 - y0);
    let mut trimmed_alpha = Vec::with_capacity(cw * ch);
    for y in y0..y1 {
        trimmed_alpha.extend_from_slice(&alpha[y * px + x0..y * px + x1]);
    }
    let image = Image::filled(cw, ch, color)
        .and_then(|img| img.with_alpha(trimmed_alpha))
        .map_err(|e| GenError::InvalidConfig(e.to_string()))?;
    Ok(Sprite {
        image,
        origin: (ox + x0, oy + y0),
    })
}

/// Vertical gradient, `color(y) = top + (bottom - top) * y / (h - 1)`.
pub fn render_gradient(top: Rgb, bottom: Rgb, w: usize, h: usize) -> Image {
    let denom = (h.max(2) - 1) as f64;
    let rows: Vec<Rgb> = (0..h)
        .map(|y| {
            let t = y as f64 / denom;
            std::array::from_fn(|c| {
                let (a, b) = (f64::from(top[c]), f64::from(bottom[c]));
                clamp_channel(round_half_up(a + (b - a) * t))
            })
        })
        .collect();
    Image::from_fn(w, h, |_, y| rows[y])
        .and_then(|img| img.with_alpha(vec![255; w * h]))
        .expect("non-empty canvas")
}

/// PRNG seed for one generation attempt.
pub fn attempt_seed(base: u64, subtask_id: &str, attempt: u32) -> u64 {
    mix3(base, fnv1a64(subtask_id.as_bytes()), u64::from(attempt))
}

fn jitter_color(rng: &mut SplitMix64, c: Rgb, eta: f64) -> Rgb {
    let amp = round_half_up(eta * 128.0) as i64;
    c.map(|v| (i64::from(v) + rng.symmetric_int(amp)).clamp(0, 255) as u8)
}

/// Element and background attributes after noise, in draw order of the
/// PRNG: color channels, then center x/y, then size.
pub fn perturb_element(rng: &mut SplitMix64, el: &ElementSpec, eta: f64) -> (Rgb, f64, (f64, f64)) {
    let color = jitter_color(rng, el.color, eta);
    let (cx, cy) = el.position.center();
    let cx = (cx + rng.symmetric(eta * 0.25)).clamp(0.0, 1.0);
    let cy = (cy + rng.symmetric(eta * 0.25)).clamp(0.0, 1.0);
    let size = (el.size * (1.0 + rng.symmetric(eta * 0.5))).clamp(f64::MIN_POSITIVE, 1.0);
    (color, size, (cx, cy))
}

#[derive(Debug, Clone)]
pub struct ProceduralGenerator {
    lexicon: Lexicon,
}

impl Default for ProceduralGenerator {
    fn default() -> Self {
        ProceduralGenerator::new(Lexicon::builtin().clone())
    }
}

impl ProceduralGenerator {
    pub fn new(lexicon: Lexicon) -> Self {
        ProceduralGenerator { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn element(&self, el: &ElementSpec, cfg: &GenConfig, rng: &mut SplitMix64) -> Result<(Sprite, Rendered), GenError> {
        let (color, size, center) = perturb_element(rng, el, cfg.eta);
        let canvas = (cfg.canvas_w, cfg.canvas_h);
        let sprite = place_element(&self.lexicon, &el.kind, color, size, center, canvas)?;
        let rendered = Rendered::Element {
            color,
            size,
            center,
            target_px: target_px(size, cfg.canvas_w, cfg.canvas_h),
        };
        Ok((sprite, rendered))
    }

    fn background(&self, bg: &BackgroundSpec, cfg: &GenConfig, rng: &mut SplitMix64) -> (Sprite, Rendered) {
        let top = jitter_color(rng, bg.top_color, cfg.eta);
        let bottom = jitter_color(rng, bg.bottom_color, cfg.eta);
        let image = render_gradient(top, bottom, cfg.canvas_w, cfg.canvas_h);
        let rendered = Rendered::Background {
            top_color: top,
            bottom_color: bottom,
        };
        (Sprite { image, origin: (0, 0) }, rendered)
    }
}

impl Generator for ProceduralGenerator {
    fn generate(&self, subtask: &Subtask, cfg: &GenConfig, attempt: u32) -> Result<Component, GenError> {
        cfg.validate()?;
        if attempt == 0 {
            return Err(GenError::InvalidConfig("attempts are numbered from 1".into()));
        }
        let seed = attempt_seed(cfg.seed, &subtask.id, attempt);
        let mut rng = SplitMix64::new(seed);
        let (sprite, params_used) = match &subtask.constraints {
            Constraints::Element(el) => self.element(el, cfg, &mut rng)?,
            Constraints::Background(bg) => self.background(bg, cfg, &mut rng),
            Constraints::Layout { .. } => return Err(GenError::LayoutSubtaskNotRenderable(subtask.id.clone())),
        };
        let (w, h) = (cfg.canvas_w as f64, cfg.canvas_h as f64);
        let (ox, oy) = sprite.origin;
        let measured_bbox = FracRect {
            x0: ox as f64 / w,
            y0: oy as f64 / h,
            x1: (ox + sprite.image.width()) as f64 / w,
            y1: (oy + sprite.image.height()) as f64 / h,
        };
        Ok(Component {
            subtask_id: subtask.id.clone(),
            image: sprite.image,
            origin: sprite.origin,
            canvas: (cfg.canvas_w, cfg.canvas_h),
            attempt,
            seed,
            measured_bbox,
            params_used,
        })
    }
}
