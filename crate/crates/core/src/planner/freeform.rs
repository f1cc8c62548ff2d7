//! Keyword-spotting adapter for prompts that are not written in the DSL.

use super::{Anchor, BackgroundSpec, ElementSpec, Lexicon, Origin, PlannerError, Position, PromptSpec};

fn kind_of<'a>(word: &'a str, lexicon: &Lexicon) -> Option<&'a str> {
    if lexicon.kind(word).is_some() {
        return Some(word);
    }
    // plain plurals: "birds", "trees"
    word.strip_suffix('s').filter(|w| lexicon.kind(w).is_some())
}

/// Scans `text` for element kinds, color words directly before a kind,
/// relation words and background styles. Unknown words are ignored.
pub fn interpret_freeform(text: &str, lexicon: &Lexicon) -> Result<PromptSpec, PlannerError> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect();

    let mut elements: Vec<ElementSpec> = Vec::new();
    let mut background: Option<BackgroundSpec> = None;
    // relation seen but its lower element not yet found
    let mut pending: Option<&str> = None;

    for (i, word) in words.iter().enumerate() {
        if let Some(kind) = kind_of(word, lexicon) {
            let idx = match elements.iter().position(|e| e.kind == kind) {
                Some(idx) => idx,
                None => {
                    let el = ElementSpec::with_defaults(kind, kind, lexicon)
                        .expect("lexicon kinds carry valid defaults");
                    elements.push(el);
                    elements.len() - 1
                }
            };
            if let Some(color) = i.checked_sub(1).and_then(|p| lexicon.color(&words[p])) {
                elements[idx].color = color;
            }
            if let Some(rel) = pending.take() {
                elements[idx].position = Position::Anchor(if rel == "upper" {
                    Anchor::LowerCenter
                } else {
                    Anchor::UpperCenter
                });
            }
        } else if let Some(rel) = lexicon.relations.get(word.as_str()) {
            if let Some(prev) = elements.last_mut() {
                prev.position = Position::Anchor(if rel == "upper" {
                    Anchor::UpperCenter
                } else {
                    Anchor::LowerCenter
                });
                pending = Some(rel.as_str());
            }
        } else if background.is_none() {
            background = BackgroundSpec::with_defaults(word, lexicon);
        }
    }

    if elements.is_empty() && background.is_none() {
        return Err(PlannerError::NoRecognizedContent);
    }
    let background = background.or_else(|| BackgroundSpec::with_defaults(&lexicon.default_background, lexicon));
    Ok(PromptSpec {
        title: text.trim().to_owned(),
        elements,
        background,
        source_text: text.to_owned(),
        origin: Origin::Freeform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> &'static Lexicon {
        Lexicon::builtin()
    }

    #[test]
    fn dragon_over_castle_at_sunset() {
        let spec = interpret_freeform(
            "Red dragon flying above a medieval castle during a dramatic sunset",
            lex(),
        )
        .unwrap();
        assert_eq!(spec.origin, Origin::Freeform);
        let kinds: Vec<_> = spec.elements.iter().map(|e| e.kind.as_str()).collect();
        assert_eq!(kinds, ["dragon", "castle"]);
        assert_eq!(spec.elements[0].color, lex().color("red").unwrap());
        assert_eq!(spec.elements[0].position, Position::Anchor(Anchor::UpperCenter));
        assert_eq!(spec.elements[1].position, Position::Anchor(Anchor::LowerCenter));
        assert_eq!(spec.background.unwrap().style, "sunset");
    }

    #[test]
    fn below_flips_roles() {
        let spec = interpret_freeform("a ship below the moon", lex()).unwrap();
        assert_eq!(spec.elements[0].position, Position::Anchor(Anchor::LowerCenter));
        assert_eq!(spec.elements[1].position, Position::Anchor(Anchor::UpperCenter));
    }

    #[test]
    fn color_must_be_adjacent_and_duplicates_merge() {
        let spec = interpret_freeform("red big tree, another tree, blue fish, birds", lex()).unwrap();
        let kinds: Vec<_> = spec.elements.iter().map(|e| e.kind.as_str()).collect();
        assert_eq!(kinds, ["tree", "fish", "bird"]);
        assert_eq!(spec.elements[0].color, lex().kind("tree").unwrap().color);
        assert_eq!(spec.elements[1].color, lex().color("blue").unwrap());
    }

    #[test]
    fn first_background_wins_and_default_applies() {
        let spec = interpret_freeform("night then day", lex()).unwrap();
        assert!(spec.elements.is_empty());
        assert_eq!(spec.background.unwrap().style, "night");
        let spec = interpret_freeform("a lonely lighthouse", lex()).unwrap();
        assert_eq!(spec.background.unwrap().style, lex().default_background);
    }

    #[test]
    fn nothing_recognized() {
        assert_eq!(interpret_freeform("qwerty asdf", lex()), Err(PlannerError::NoRecognizedContent));
    }
}
