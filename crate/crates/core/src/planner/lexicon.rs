//! The shipped vocabulary: element kinds with glyph outlines, color words,
//! anchors, background styles and positional relation words.
//!
//! All coordinates are integers in thousandths of the unit square so the file
//! stays float-free canonical JSON.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::raster::Rgb;

const BUILTIN: &str = include_str!("../../data/lexicon.json");

static BUILTIN_LEXICON: LazyLock<Lexicon> =
    LazyLock::new(|| Lexicon::from_json(BUILTIN).expect("built-in lexicon is valid"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Closed polygon, even-odd fill.
    Polygon(Vec<[i32; 2]>),
    /// `[cx, cy, rx, ry]`.
    Ellipse([i32; 4]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindDef {
    pub color: Rgb,
    /// Default size in thousandths of the canvas min-dimension.
    pub size: u32,
    pub position: String,
    pub glyph: Vec<Shape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundDef {
    pub top: Rgb,
    pub bottom: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub version: u32,
    pub kinds: BTreeMap<String, KindDef>,
    pub colors: BTreeMap<String, Rgb>,
    pub anchors: BTreeMap<String, [u32; 2]>,
    pub backgrounds: BTreeMap<String, BackgroundDef>,
    pub default_background: String,
    /// Positional words mapped to `upper` or `lower`.
    pub relations: BTreeMap<String, String>,
}

impl Lexicon {
    pub fn builtin() -> &'static Lexicon {
        &BUILTIN_LEXICON
    }

    pub fn from_json(text: &str) -> Result<Lexicon, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn kind(&self, name: &str) -> Option<&KindDef> {
        self.kinds.get(name)
    }

    pub fn color(&self, word: &str) -> Option<Rgb> {
        self.colors.get(word).copied()
    }

    pub fn background(&self, style: &str) -> Option<&BackgroundDef> {
        self.backgrounds.get(style)
    }
}
