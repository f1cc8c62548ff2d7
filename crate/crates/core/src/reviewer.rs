//! Reviewer agent: measures rendered components, scores them against their
//! subtask constraints and decides whether to keep, retry or hand over.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{place_element, Component, GenError};
use crate::planner::{Constraints, ElementSpec, Lexicon, Subtask};
use crate::raster::{Image, Rgb};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReviewError {
    #[error("component '{0}' has no opaque pixels")]
    EmptyComponent(String),
    #[error("subtask '{0}' cannot be scored")]
    NotScorable(String),
    #[error("invalid review policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Reference(#[from] GenError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredAttributes {
    pub mean_color: [f64; 3],
    /// Alpha centroid, canvas fractions.
    pub center: (f64, f64),
    pub area_fraction: f64,
    /// Mean of the first and last canvas rows, for full-canvas components.
    pub top_color: Option<[f64; 3]>,
    pub bottom_color: Option<[f64; 3]>,
    pub canvas: (usize, usize),
}

fn row_mean(img: &Image, y: usize) -> [f64; 3] {
    let w = img.width();
    let mut sum = [0.0; 3];
    for x in 0..w {
        let p = img.get(x, y);
        for k in 0..3 {
            sum[k] += f64::from(p[k]);
        }
    }
    sum.map(|s| s / w as f64)
}

fn measure_sprite(
    img: &Image,
    origin: (usize, usize),
    canvas: (usize, usize),
    full_canvas: bool,
) -> Option<MeasuredAttributes> {
    let (w, h) = (img.width(), img.height());
    let (cw, ch) = canvas;
    let (ox, oy) = origin;
    let mut n = 0u64;
    let mut color = [0.0f64; 3];
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            if img.alpha_at(x, y) == 0 {
                continue;
            }
            n += 1;
            let p = img.get(x, y);
            for k in 0..3 {
                color[k] += f64::from(p[k]);
            }
            sx += (ox + x) as f64 + 0.5;
            sy += (oy + y) as f64 + 0.5;
        }
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    Some(MeasuredAttributes {
        mean_color: color.map(|s| s / nf),
        center: (sx / nf / cw as f64, sy / nf / ch as f64),
        area_fraction: nf / (cw * ch) as f64,
        top_color: full_canvas.then(|| row_mean(img, 0)),
        bottom_color: full_canvas.then(|| row_mean(img, h - 1)),
        canvas,
    })
}

pub fn measure(c: &Component) -> Result<MeasuredAttributes, ReviewError> {
    measure_sprite(&c.image, c.origin, c.canvas, c.is_background())
        .ok_or_else(|| ReviewError::EmptyComponent(c.subtask_id.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewScore {
    pub value: f64,
    pub parts: BTreeMap<String, f64>,
    pub subtask_id: String,
    pub attempt: u32,
}

impl ReviewScore {
    pub fn from_parts(subtask_id: &str, attempt: u32, parts: BTreeMap<String, f64>) -> ReviewScore {
        let value = if parts.is_empty() {
            0.0
        } else {
            parts.values().sum::<f64>() / parts.len() as f64
        };
        ReviewScore {
            value: value.clamp(0.0, 1.0),
            parts,
            subtask_id: subtask_id.to_owned(),
            attempt,
        }
    }
}

pub fn color_part(measured: [f64; 3], target: Rgb) -> f64 {
    let d2: f64 = (0..3).map(|k| (measured[k] - f64::from(target[k])).powi(2)).sum();
    (1.0 - d2.sqrt() / (255.0 * 3f64.sqrt())).clamp(0.0, 1.0)
}

pub fn position_part(center: (f64, f64), target: (f64, f64)) -> f64 {
    let d = (center.0 - target.0).hypot(center.1 - target.1);
    1.0 - (d / 0.5).min(1.0)
}

pub fn size_part(area: f64, target_area: f64) -> f64 {
    if area <= 0.0 || target_area <= 0.0 {
        return 0.0;
    }
    area.min(target_area) / area.max(target_area)
}

/// Where and how large a faithful render of `el` lands on this canvas:
/// the measured attributes of the noise-free placement.
pub fn reference_attributes(
    el: &ElementSpec,
    canvas: (usize, usize),
    lexicon: &Lexicon,
) -> Result<MeasuredAttributes, ReviewError> {
    let sprite = place_element(lexicon, &el.kind, el.color, el.size, el.position.center(), canvas)?;
    measure_sprite(&sprite.image, sprite.origin, canvas, false)
        .ok_or_else(|| ReviewError::EmptyComponent(el.name.clone()))
}

/// Scores measured attributes against a subtask. Elements get color,
/// position and size parts; backgrounds a single color part averaged over
/// both gradient ends.
pub fn score(
    m: &MeasuredAttributes,
    t: &Subtask,
    attempt: u32,
    lexicon: &Lexicon,
) -> Result<ReviewScore, ReviewError> {
    let mut parts = BTreeMap::new();
    match &t.constraints {
        Constraints::Element(el) => {
            let reference = reference_attributes(el, m.canvas, lexicon)?;
            parts.insert("color".to_owned(), color_part(m.mean_color, el.color));
            parts.insert("position".to_owned(), position_part(m.center, reference.center));
            parts.insert("size".to_owned(), size_part(m.area_fraction, reference.area_fraction));
        }
        Constraints::Background(bg) => {
            let top = color_part(m.top_color.unwrap_or(m.mean_color), bg.top_color);
            let bottom = color_part(m.bottom_color.unwrap_or(m.mean_color), bg.bottom_color);
            parts.insert("color".to_owned(), (top + bottom) / 2.0);
        }
        Constraints::Layout { .. } => return Err(ReviewError::NotScorable(t.id.clone())),
    }
    Ok(ReviewScore::from_parts(&t.id, attempt, parts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnExhaust {
    TakeBest,
    Escalate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewPolicy {
    pub tau: f64,
    pub max_attempts: u32,
    pub on_exhaust: OnExhaust,
}

impl Default for ReviewPolicy {
    fn default() -> Self {
        ReviewPolicy {
            tau: 0.7,
            max_attempts: 3,
            on_exhaust: OnExhaust::TakeBest,
        }
    }
}

impl ReviewPolicy {
    pub fn new(tau: f64, max_attempts: u32, on_exhaust: OnExhaust) -> Result<ReviewPolicy, ReviewError> {
        let p = ReviewPolicy {
            tau,
            max_attempts,
            on_exhaust,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ReviewError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ReviewError::InvalidPolicy(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.max_attempts == 0 {
            return Err(ReviewError::InvalidPolicy("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Accept { attempt: u32 },
    Regenerate,
    Escalate { best_attempt: u32 },
}

/// Highest-scoring attempt; the earliest one wins ties.
pub fn best_attempt(history: &[ReviewScore]) -> Option<&ReviewScore> {
    history.iter().fold(None, |best: Option<&ReviewScore>, s| match best {
        Some(b) if b.value >= s.value => Some(b),
        _ => Some(s),
    })
}

/// Decides on the latest score `s`; `history` holds every score for the
/// subtask so far, `s` included.
pub fn gate(s: &ReviewScore, p: &ReviewPolicy, history: &[ReviewScore]) -> Decision {
    if s.value >= p.tau {
        return Decision::Accept { attempt: s.attempt };
    }
    if s.attempt < p.max_attempts {
        return Decision::Regenerate;
    }
    let best = best_attempt(history).filter(|b| b.value > s.value).unwrap_or(s).attempt;
    match p.on_exhaust {
        OnExhaust::TakeBest => Decision::Accept { attempt: best },
        OnExhaust::Escalate => Decision::Escalate { best_attempt: best },
    }
}

pub trait Scorer: Send + Sync {
    fn score(&self, c: &Component, t: &Subtask) -> Result<ReviewScore, ReviewError>;
}

/// Attribute-matching scorer over [`measure`] and [`score`].
#[derive(Debug, Clone)]
pub struct AttributeScorer {
    lexicon: Lexicon,
}

impl Default for AttributeScorer {
    fn default() -> Self {
        AttributeScorer::new(Lexicon::builtin().clone())
    }
}

impl AttributeScorer {
    pub fn new(lexicon: Lexicon) -> Self {
        AttributeScorer { lexicon }
    }
}

impl Scorer for AttributeScorer {
    fn score(&self, c: &Component, t: &Subtask) -> Result<ReviewScore, ReviewError> {
        score(&measure(c)?, t, c.attempt, &self.lexicon)
    }
}

/// Replays fixed scores: `scripts[subtask][attempt - 1]`, `fallback` past the
/// end of a script or for unscripted subtasks. For driving the control flow
/// in tests and demos without depending on rendering.
#[derive(Debug, Clone, Default)]
pub struct ScriptedScorer {
    pub scripts: BTreeMap<String, Vec<f64>>,
    pub fallback: f64,
}

impl Scorer for ScriptedScorer {
    fn score(&self, c: &Component, t: &Subtask) -> Result<ReviewScore, ReviewError> {
        let value = self
            .scripts
            .get(&t.id)
            .and_then(|s| s.get(c.attempt as usize - 1))
            .copied()
            .unwrap_or(self.fallback);
        Ok(ReviewScore::from_parts(&t.id, c.attempt, BTreeMap::from([("scripted".to_owned(), value)])))
    }
}
