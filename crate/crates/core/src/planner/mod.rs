//! Planner agent: turns a prompt into a [`PromptSpec`] and decomposes it into
//! an ordered [`Plan`] of subtasks, which users may then edit.

mod dsl;
mod freeform;
mod lexicon;

pub use dsl::{parse_prompt, parse_value, render_dsl, Value as DslValue};
pub use freeform::interpret_freeform;
pub use lexicon::{BackgroundDef, KindDef, Lexicon, Shape};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Rgb;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    SyntaxError {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("unknown kind '{kind}' at {line}:{col}")]
    UnknownKind { kind: String, line: usize, col: usize },
    #[error("unknown background style '{style}' at {line}:{col}")]
    UnknownBackground {
        style: String,
        line: usize,
        col: usize,
    },
    #[error("duplicate element name '{name}' at {line}:{col}")]
    DuplicateElementName { name: String, line: usize, col: usize },
    #[error("bad value for '{attribute}' at {line}:{col}: {message}")]
    BadAttributeValue {
        attribute: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("scene has neither elements nor a background")]
    EmptyScene,
    #[error("no recognized content in prompt")]
    NoRecognizedContent,
    #[error("unknown subtask '{0}'")]
    UnknownSubtask(String),
    #[error("invalid edit payload: {0}")]
    InvalidPayload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Anchor {
    #[serde(rename = "upper-left")]
    UpperLeft,
    #[serde(rename = "upper-center")]
    UpperCenter,
    #[serde(rename = "upper-right")]
    UpperRight,
    #[serde(rename = "center-left")]
    CenterLeft,
    #[serde(rename = "center")]
    Center,
    #[serde(rename = "center-right")]
    CenterRight,
    #[serde(rename = "lower-left")]
    LowerLeft,
    #[serde(rename = "lower-center")]
    LowerCenter,
    #[serde(rename = "lower-right")]
    LowerRight,
}

impl Anchor {
    pub const ALL: [Anchor; 9] = [
        Anchor::UpperLeft,
        Anchor::UpperCenter,
        Anchor::UpperRight,
        Anchor::CenterLeft,
        Anchor::Center,
        Anchor::CenterRight,
        Anchor::LowerLeft,
        Anchor::LowerCenter,
        Anchor::LowerRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Anchor::UpperLeft => "upper-left",
            Anchor::UpperCenter => "upper-center",
            Anchor::UpperRight => "upper-right",
            Anchor::CenterLeft => "center-left",
            Anchor::Center => "center",
            Anchor::CenterRight => "center-right",
            Anchor::LowerLeft => "lower-left",
            Anchor::LowerCenter => "lower-center",
            Anchor::LowerRight => "lower-right",
        }
    }

    pub fn parse(s: &str) -> Option<Anchor> {
        Anchor::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Canvas-fraction center of the anchor.
    pub fn fractions(self) -> (f64, f64) {
        let i = Anchor::ALL.iter().position(|&a| a == self).expect("listed");
        let pick = |k: usize| [0.2, 0.5, 0.8][k];
        (pick(i % 3), [0.25, 0.5, 0.75][i / 3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Position {
    Anchor(Anchor),
    Explicit { cx: f64, cy: f64 },
}

impl Position {
    pub fn center(self) -> (f64, f64) {
        match self {
            Position::Anchor(a) => a.fractions(),
            Position::Explicit { cx, cy } => (cx, cy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSpec {
    pub name: String,
    pub kind: String,
    pub color: Rgb,
    /// Fraction of the canvas min-dimension, in `(0, 1]`.
    pub size: f64,
    pub position: Position,
}

impl ElementSpec {
    /// An element with every attribute at its lexicon default.
    pub fn with_defaults(name: &str, kind: &str, lexicon: &Lexicon) -> Option<ElementSpec> {
        let def = lexicon.kind(kind)?;
        Some(ElementSpec {
            name: name.to_owned(),
            kind: kind.to_owned(),
            color: def.color,
            size: f64::from(def.size) / 1000.0,
            position: Position::Anchor(Anchor::parse(&def.position)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub style: String,
    pub top_color: Rgb,
    pub bottom_color: Rgb,
}

impl BackgroundSpec {
    pub fn with_defaults(style: &str, lexicon: &Lexicon) -> Option<BackgroundSpec> {
        let def = lexicon.background(style)?;
        Some(BackgroundSpec {
            style: style.to_owned(),
            top_color: def.top,
            bottom_color: def.bottom,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Dsl,
    Freeform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub title: String,
    pub elements: Vec<ElementSpec>,
    pub background: Option<BackgroundSpec>,
    pub source_text: String,
    pub origin: Origin,
}

impl PromptSpec {
    pub fn validate(&self, lexicon: &Lexicon) -> Result<(), PlannerError> {
        if self.elements.is_empty() && self.background.is_none() {
            return Err(PlannerError::EmptyScene);
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &self.elements {
            if !names.insert(e.name.as_str()) {
                return Err(PlannerError::InvalidPayload(format!("duplicate element name '{}'", e.name)));
            }
            validate_element(e, lexicon)?;
        }
        if let Some(bg) = &self.background {
            if lexicon.background(&bg.style).is_none() {
                return Err(PlannerError::InvalidPayload(format!("unknown background '{}'", bg.style)));
            }
        }
        Ok(())
    }
}

fn validate_element(e: &ElementSpec, lexicon: &Lexicon) -> Result<(), PlannerError> {
    if lexicon.kind(&e.kind).is_none() {
        return Err(PlannerError::InvalidPayload(format!("unknown kind '{}'", e.kind)));
    }
    if !(e.size > 0.0 && e.size <= 1.0) {
        return Err(PlannerError::InvalidPayload(format!("size {} outside (0, 1]", e.size)));
    }
    if let Position::Explicit { cx, cy } = e.position {
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(PlannerError::InvalidPayload(format!("position ({cx}, {cy}) outside [0, 1]")));
        }
    }
    if !is_identifier(&e.name) {
        return Err(PlannerError::InvalidPayload(format!("'{}' is not an identifier", e.name)));
    }
    Ok(())
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Constraints {
    Element(ElementSpec),
    Background(BackgroundSpec),
    /// Element subtask ids in draw order.
    Layout { order: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubtaskKind {
    Element,
    Background,
    Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: String,
    pub constraints: Constraints,
}

impl Subtask {
    pub fn kind(&self) -> SubtaskKind {
        match self.constraints {
            Constraints::Element(_) => SubtaskKind::Element,
            Constraints::Background(_) => SubtaskKind::Background,
            Constraints::Layout { .. } => SubtaskKind::Layout,
        }
    }

    pub fn is_renderable(&self) -> bool {
        self.kind() != SubtaskKind::Layout
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub subtasks: Vec<Subtask>,
    pub prompt: PromptSpec,
    pub revision: u64,
    next_ordinal: u32,
}

impl Plan {
    pub fn subtask(&self, id: &str) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.id == id)
    }

    pub fn renderable(&self) -> impl Iterator<Item = &Subtask> {
        self.subtasks.iter().filter(|s| s.is_renderable())
    }

    pub fn element_ids(&self) -> Vec<String> {
        self.subtasks
            .iter()
            .filter(|s| s.kind() == SubtaskKind::Element)
            .map(|s| s.id.clone())
            .collect()
    }

    /// Rebuilds the subtask list from `prompt`, reusing ids of surviving
    /// elements in `keep`.
    fn rebuild(&mut self, ids: Vec<(String, String)>) {
        let mut subtasks = Vec::new();
        for e in &self.prompt.elements {
            let id = ids
                .iter()
                .find(|(name, _)| *name == e.name)
                .map(|(_, id)| id.clone())
                .expect("every element has an id");
            subtasks.push(Subtask {
                id,
                constraints: Constraints::Element(e.clone()),
            });
        }
        let order = subtasks.iter().map(|s| s.id.clone()).collect();
        if let Some(bg) = &self.prompt.background {
            let id = self
                .subtasks
                .iter()
                .find(|s| s.kind() == SubtaskKind::Background)
                .map(|s| s.id.clone())
                .unwrap_or_else(|| {
                    let id = format!("st-{}-background", self.next_ordinal);
                    self.next_ordinal += 1;
                    id
                });
            subtasks.push(Subtask {
                id,
                constraints: Constraints::Background(bg.clone()),
            });
        }
        let layout_id = self
            .subtasks
            .iter()
            .find(|s| s.kind() == SubtaskKind::Layout)
            .map(|s| s.id.clone())
            .expect("plans always have a layout subtask");
        subtasks.push(Subtask {
            id: layout_id,
            constraints: Constraints::Layout { order },
        });
        self.subtasks = subtasks;
    }

    fn element_id_map(&self) -> Vec<(String, String)> {
        self.subtasks
            .iter()
            .filter_map(|s| match &s.constraints {
                Constraints::Element(e) => Some((e.name.clone(), s.id.clone())),
                _ => None,
            })
            .collect()
    }
}

/// One element subtask per element, then the background, then the layout.
/// Ids are `st-<ordinal>-<name>` with 1-based ordinals.
pub fn decompose(p: &PromptSpec) -> Plan {
    let mut subtasks = Vec::new();
    let mut ordinal = 1;
    let mut next_id = |name: &str| {
        let id = format!("st-{ordinal}-{name}");
        ordinal += 1;
        id
    };
    for e in &p.elements {
        subtasks.push(Subtask {
            id: next_id(&e.name),
            constraints: Constraints::Element(e.clone()),
        });
    }
    let order = subtasks.iter().map(|s| s.id.clone()).collect();
    if let Some(bg) = &p.background {
        subtasks.push(Subtask {
            id: next_id("background"),
            constraints: Constraints::Background(bg.clone()),
        });
    }
    subtasks.push(Subtask {
        id: next_id("layout"),
        constraints: Constraints::Layout { order },
    });
    Plan {
        subtasks,
        prompt: p.clone(),
        revision: 0,
        next_ordinal: ordinal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PlanEdit {
    /// `value` uses DSL value syntax, e.g. `#00FF00`, `0.3`, `upper-left`, `(0.2, 0.4)`.
    SetAttribute {
        target: String,
        attribute: String,
        value: String,
    },
    AddElement { element: ElementSpec },
    RemoveElement { target: String },
    /// New draw order of the element subtasks, by id.
    Reorder { order: Vec<String> },
}

/// Applies one edit, returning a new plan with `revision + 1`.
pub fn edit_plan(plan: &Plan, edit: &PlanEdit, lexicon: &Lexicon) -> Result<Plan, PlannerError> {
    let mut next = plan.clone();
    let ids = plan.element_id_map();
    match edit {
        PlanEdit::SetAttribute {
            target,
            attribute,
            value,
        } => {
            let subtask = plan
                .subtask(target)
                .ok_or_else(|| PlannerError::UnknownSubtask(target.clone()))?;
            let parsed = parse_value(value)
                .map_err(|e| PlannerError::InvalidPayload(format!("value '{value}': {e}")))?;
            match &subtask.constraints {
                Constraints::Element(e) => {
                    let el = next
                        .prompt
                        .elements
                        .iter_mut()
                        .find(|x| x.name == e.name)
                        .expect("element subtasks mirror prompt elements");
                    dsl::apply_element_attribute(el, attribute, &parsed, lexicon)
                        .map_err(PlannerError::InvalidPayload)?;
                    validate_element(el, lexicon)?;
                }
                Constraints::Background(_) => {
                    let bg = next.prompt.background.as_mut().expect("background subtask");
                    dsl::apply_background_attribute(bg, attribute, &parsed, lexicon)
                        .map_err(PlannerError::InvalidPayload)?;
                }
                Constraints::Layout { .. } => {
                    return Err(PlannerError::InvalidPayload(
                        "the layout subtask has no attributes; use reorder".into(),
                    ))
                }
            }
            next.rebuild(ids);
        }
        PlanEdit::AddElement { element } => {
            if plan.prompt.elements.iter().any(|e| e.name == element.name) {
                return Err(PlannerError::InvalidPayload(format!(
                    "element '{}' already exists",
                    element.name
                )));
            }
            validate_element(element, lexicon)?;
            next.prompt.elements.push(element.clone());
            let mut ids = ids;
            ids.push((element.name.clone(), format!("st-{}-{}", next.next_ordinal, element.name)));
            next.next_ordinal += 1;
            next.rebuild(ids);
        }
        PlanEdit::RemoveElement { target } => {
            let subtask = plan
                .subtask(target)
                .ok_or_else(|| PlannerError::UnknownSubtask(target.clone()))?;
            let Constraints::Element(e) = &subtask.constraints else {
                return Err(PlannerError::InvalidPayload(format!("'{target}' is not an element subtask")));
            };
            next.prompt.elements.retain(|x| x.name != e.name);
            if next.prompt.elements.is_empty() && next.prompt.background.is_none() {
                return Err(PlannerError::InvalidPayload("removing the last element empties the scene".into()));
            }
            next.rebuild(ids);
        }
        PlanEdit::Reorder { order } => {
            let mut current = plan.element_ids();
            let mut wanted = order.clone();
            current.sort();
            wanted.sort();
            if current != wanted {
                if let Some(unknown) = order.iter().find(|id| plan.subtask(id).is_none()) {
                    return Err(PlannerError::UnknownSubtask(unknown.clone()));
                }
                return Err(PlannerError::InvalidPayload(
                    "reorder must list every element subtask exactly once".into(),
                ));
            }
            let name_of = |id: &String| {
                ids.iter().find(|(_, i)| i == id).map(|(n, _)| n.clone()).expect("checked")
            };
            let names: Vec<String> = order.iter().map(name_of).collect();
            next.prompt
                .elements
                .sort_by_key(|e| names.iter().position(|n| *n == e.name).expect("permutation"));
            next.rebuild(ids);
        }
    }
    next.revision = plan.revision + 1;
    Ok(next)
}

/// Text in, plan out. The reference implementation is deterministic; an
/// LLM-backed planner can be attached behind the same contract.
pub trait Planner: Send + Sync {
    fn plan(&self, prompt_text: &str) -> Result<Plan, PlannerError>;
}

/// DSL input when the text starts with `scene`, keyword spotting otherwise.
#[derive(Debug, Clone, Copy)]
pub struct ReferencePlanner<'a> {
    pub lexicon: &'a Lexicon,
}

impl ReferencePlanner<'_> {
    pub fn interpret(&self, prompt_text: &str) -> Result<PromptSpec, PlannerError> {
        if prompt_text.trim_start().starts_with("scene") {
            parse_prompt(prompt_text, self.lexicon)
        } else {
            interpret_freeform(prompt_text, self.lexicon)
        }
    }
}

impl Planner for ReferencePlanner<'_> {
    fn plan(&self, prompt_text: &str) -> Result<Plan, PlannerError> {
        Ok(decompose(&self.interpret(prompt_text)?))
    }
}
