//! Integration agent: separates overlapping components and composites them
//! onto the background.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::Component;
use crate::raster::{clamp_channel, luma_of, round_half_up, Image, Rgb};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("placement references missing component '{0}'")]
    MissingComponent(String),
    #[error("component '{0}' was rendered for a different canvas")]
    CanvasMismatch(String),
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Largest tolerated intersection over the smaller box area.
    pub theta: f64,
    /// When set, pull each element's mean luma toward the background's,
    /// moving it by at most this many levels.
    pub harmonize_luma: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            theta: 0.3,
            harmonize_luma: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrateError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(IntegrateError::InvalidConfig(format!("theta {} outside [0, 1]", self.theta)));
        }
        if self.harmonize_luma.is_some_and(|l| !(l >= 0.0)) {
            return Err(IntegrateError::InvalidConfig("harmonize limit must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub subtask_id: String,
    pub final_center: (f64, f64),
    pub z: u32,
    /// Shift applied by conflict resolution, canvas fractions.
    pub displaced_by: (f64, f64),
    /// Top-left of the sprite on the canvas, pixels.
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unresolved {
    pub earlier: String,
    pub later: String,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub placements: Vec<Placement>,
    /// Pairs still above `theta` after the pass; empty when resolved.
    pub unresolved: Vec<Unresolved>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub image: Image,
    pub placements: Vec<Placement>,
    pub canvas: (usize, usize),
}

/// Pixel box, `x1`/`y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PxBox {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl PxBox {
    fn of(c: &Component) -> PxBox {
        let (x, y) = (c.origin.0 as i64, c.origin.1 as i64);
        PxBox {
            x0: x,
            y0: y,
            x1: x + c.image.width() as i64,
            y1: y + c.image.height() as i64,
        }
    }

    fn area(&self) -> i64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn shifted(&self, dx: i64, dy: i64) -> PxBox {
        PxBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    fn fits(&self, w: i64, h: i64) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 <= w && self.y1 <= h
    }

    fn clamped(&self, w: i64, h: i64) -> PxBox {
        let dx = (-self.x0).max(0) - (self.x1 - w).max(0);
        let dy = (-self.y0).max(0) - (self.y1 - h).max(0);
        self.shifted(dx, dy)
    }
}

fn span_overlap(a0: i64, a1: i64, b0: i64, b1: i64) -> i64 {
    (a1.min(b1) - a0.max(b0)).max(0)
}

/// Intersection area over the smaller box area.
fn overlap_ratio(a: &PxBox, b: &PxBox) -> f64 {
    let inter = span_overlap(a.x0, a.x1, b.x0, b.x1) * span_overlap(a.y0, a.y1, b.y0, b.y1);
    inter as f64 / a.area().min(b.area()) as f64
}

/// Signed shifts of `b` along one axis that bring its overlap with `a` down
/// to `keep` pixels: (toward +, toward -).
fn axis_shifts(a0: i64, a1: i64, b0: i64, b1: i64, keep: i64) -> (i64, i64) {
    (a1 - keep - b0, -(b1 - (a0 + keep)))
}

/// Candidate moves for `b` against `a`, best first. The rule: the axis with
/// the smaller shift (ties to y), moving away from `a`; alternatives after.
fn candidate_moves(a: &PxBox, b: &PxBox, theta: f64, canvas: (i64, i64)) -> Vec<(i64, i64)> {
    let min_area = a.area().min(b.area()) as f64;
    let ox = span_overlap(a.x0, a.x1, b.x0, b.x1);
    let oy = span_overlap(a.y0, a.y1, b.y0, b.y1);
    // overlap area = (kept span) * (other axis overlap) <= theta * min_area
    let keep_x = (theta * min_area / oy as f64).floor() as i64;
    let keep_y = (theta * min_area / ox as f64).floor() as i64;
    let (xp, xn) = axis_shifts(a.x0, a.x1, b.x0, b.x1, keep_x.min(ox));
    let (yp, yn) = axis_shifts(a.y0, a.y1, b.y0, b.y1, keep_y.min(oy));

    let away = |a0: i64, a1: i64, b0: i64, b1: i64, room_neg: i64, room_pos: i64| -> bool {
        let (ca, cb) = (a0 + a1, b0 + b1);
        if cb != ca {
            cb > ca
        } else {
            room_pos > room_neg
        }
    };
    let (w, h) = canvas;
    let x_pos = away(a.x0, a.x1, b.x0, b.x1, b.x0, w - b.x1);
    let y_pos = away(a.y0, a.y1, b.y0, b.y1, b.y0, h - b.y1);
    let x_pref = if x_pos { xp } else { xn };
    let x_alt = if x_pos { xn } else { xp };
    let y_pref = if y_pos { yp } else { yn };
    let y_alt = if y_pos { yn } else { yp };

    let mut moves = if x_pref.abs() < y_pref.abs() {
        vec![(x_pref, 0), (0, y_pref)]
    } else {
        vec![(0, y_pref), (x_pref, 0)]
    };
    let mut alts = [(x_alt, 0), (0, y_alt)];
    alts.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dx != 0));
    moves.extend(alts);
    moves
}

/// Assigns draw order and separates overlapping element boxes in a single
/// pass: the background (if any) is z=0, elements follow in the given order,
/// and each later element is moved off every earlier one it overlaps by
/// more than `theta`.
pub fn resolve_layout(components: &[&Component], canvas: (usize, usize), theta: f64) -> Layout {
    let (w, h) = (canvas.0 as i64, canvas.1 as i64);
    let mut ordered: Vec<&Component> = components.iter().copied().filter(|c| c.is_background()).collect();
    ordered.extend(components.iter().copied().filter(|c| !c.is_background()));

    let originals: Vec<PxBox> = ordered.iter().map(|c| PxBox::of(c)).collect();
    let mut boxes = originals.clone();
    let is_element: Vec<bool> = ordered.iter().map(|c| !c.is_background()).collect();

    for j in 0..boxes.len() {
        if !is_element[j] {
            continue;
        }
        for i in 0..j {
            if !is_element[i] || overlap_ratio(&boxes[i], &boxes[j]) <= theta {
                continue;
            }
            let moves = candidate_moves(&boxes[i], &boxes[j], theta, (w, h));
            let fitting = moves.iter().find(|&&(dx, dy)| boxes[j].shifted(dx, dy).fits(w, h));
            boxes[j] = match fitting {
                Some(&(dx, dy)) => boxes[j].shifted(dx, dy),
                None => boxes[j].shifted(moves[0].0, moves[0].1).clamped(w, h),
            };
        }
    }

    let mut unresolved = Vec::new();
    for j in 0..boxes.len() {
        for i in 0..j {
            if !is_element[i] || !is_element[j] {
                continue;
            }
            let overlap = overlap_ratio(&boxes[i], &boxes[j]);
            if overlap > theta {
                unresolved.push(Unresolved {
                    earlier: ordered[i].subtask_id.clone(),
                    later: ordered[j].subtask_id.clone(),
                    overlap,
                });
            }
        }
    }

    let (wf, hf) = (w as f64, h as f64);
    let placements = ordered
        .iter()
        .zip(boxes.iter().zip(&originals))
        .enumerate()
        .map(|(z, (c, (b, o)))| Placement {
            subtask_id: c.subtask_id.clone(),
            final_center: ((b.x0 + b.x1) as f64 / 2.0 / wf, (b.y0 + b.y1) as f64 / 2.0 / hf),
            z: z as u32,
            displaced_by: ((b.x0 - o.x0) as f64 / wf, (b.y0 - o.y0) as f64 / hf),
            origin: (b.x0 as usize, b.y0 as usize),
        })
        .collect();
    Layout { placements, unresolved }
}

/// `src * a/255 + dst * (1 - a/255)`, rounded half-up.
pub fn blend(src: Rgb, dst: Rgb, alpha: u8) -> Rgb {
    let a = f64::from(alpha) / 255.0;
    std::array::from_fn(|k| clamp_channel(round_half_up(f64::from(src[k]) * a + f64::from(dst[k]) * (1.0 - a))))
}

pub enum Backdrop<'a> {
    Component(&'a Component),
    Flat(Rgb),
}

/// Draws every placed component over the backdrop in z order.
pub fn composite(
    backdrop: Backdrop<'_>,
    placements: &[Placement],
    components: &[&Component],
    canvas: (usize, usize),
) -> Result<Composite, IntegrateError> {
    let (w, h) = canvas;
    let mut out = match backdrop {
        Backdrop::Component(c) => {
            if c.image.width() != w || c.image.height() != h {
                return Err(IntegrateError::CanvasMismatch(c.subtask_id.clone()));
            }
            c.image.clone().without_alpha()
        }
        Backdrop::Flat(color) => Image::filled(w, h, color).map_err(|e| IntegrateError::InvalidConfig(e.to_string()))?,
    };
    let mut order: Vec<&Placement> = placements.iter().collect();
    order.sort_by_key(|p| p.z);
    for p in order {
        let c = components
            .iter()
            .find(|c| c.subtask_id == p.subtask_id)
            .ok_or_else(|| IntegrateError::MissingComponent(p.subtask_id.clone()))?;
        if c.is_background() {
            continue;
        }
        let (ox, oy) = p.origin;
        if ox + c.image.width() > w || oy + c.image.height() > h {
            return Err(IntegrateError::CanvasMismatch(c.subtask_id.clone()));
        }
        for y in 0..c.image.height() {
            for x in 0..c.image.width() {
                let a = c.image.alpha_at(x, y);
                if a == 0 {
                    continue;
                }
                let dst = out.get(ox + x, oy + y);
                out.set(ox + x, oy + y, blend(c.image.get(x, y), dst, a));
            }
        }
    }
    Ok(Composite {
        image: out,
        placements: placements.to_vec(),
        canvas,
    })
}

fn mean_luma(img: &Image) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.alpha_at(x, y) > 0 {
                sum += luma_of(img.get(x, y));
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Shifts the sprite's colors so its mean luma moves toward `target` by at
/// most `limit` levels.
pub fn harmonize(c: &Component, target: f64, limit: f64) -> Component {
    let mut out = c.clone();
    if let Some(m) = mean_luma(&c.image) {
        let delta = (target - m).clamp(-limit, limit);
        let n = out.image.width() * out.image.height();
        out.image.add_luma_delta(&vec![delta; n]);
    }
    out
}

/// Full integration step: harmonize (optional), resolve the layout and
/// composite. `components` holds at most one background plus the elements
/// in plan order.
pub fn integrate(components: &[Component], cfg: &IntegratorConfig) -> Result<(Composite, Layout), IntegrateError> {
    cfg.validate()?;
    let canvas = components
        .first()
        .map(|c| c.canvas)
        .ok_or_else(|| IntegrateError::InvalidConfig("nothing to integrate".into()))?;
    if let Some(c) = components.iter().find(|c| c.canvas != canvas) {
        return Err(IntegrateError::CanvasMismatch(c.subtask_id.clone()));
    }
    let background = components.iter().find(|c| c.is_background());
    let harmonized: Vec<Component>;
    let parts: Vec<&Component> = match (cfg.harmonize_luma, background) {
        (Some(limit), Some(bg)) => {
            let target = mean_luma(&bg.image).unwrap_or(128.0);
            harmonized = components
                .iter()
                .map(|c| if c.is_background() { c.clone() } else { harmonize(c, target, limit) })
                .collect();
            harmonized.iter().collect()
        }
        _ => components.iter().collect(),
    };
    let layout = resolve_layout(&parts, canvas, cfg.theta);
    let backdrop = match parts.iter().find(|c| c.is_background()) {
        Some(bg) => Backdrop::Component(bg),
        None => Backdrop::Flat([255, 255, 255]),
    };
    let composite = composite(backdrop, &layout.placements, &parts, canvas)?;
    Ok((composite, layout))
}
